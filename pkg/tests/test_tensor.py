import math

import numpy as np
import pytest

from emoclass import tensor as T
from emoclass.tensor import (GradientCheckError, NonFiniteError, Tape, Tensor, TensorError, backward,
                             gradient_check)
from oracles import central_difference

SEEDS = range(5)
TOL = 1e-4


def _rng(seed):
    return np.random.default_rng(1000 + seed)


def _grad(f, x):
    x = Tensor(np.array(x, dtype=float), requires_grad=True)
    with Tape() as tape:
        y = f(x)
    backward(y, tape)
    return x.grad


# --- per-op gradient checks (finite differences built into the engine) ----------------------

def _away_from_zero(rng, shape):
    v = rng.uniform(0.2, 1.5, size=shape)
    return v * rng.choice([-1.0, 1.0], size=shape)


OPS = {
    "add": lambda x, c: T.sum_all(T.mul(T.add(x, c["b"]), c["w"])),
    "sub": lambda x, c: T.sum_all(T.mul(T.sub(c["b"], x), c["w"])),
    "mul": lambda x, c: T.sum_all(T.mul(x, x)),
    "broadcast_add": lambda x, c: T.sum_all(T.mul(T.add(c["m"], x[0]), c["m"])),
    "matmul": lambda x, c: T.sum_all(T.tanh(T.matmul(c["m"], T.reshape(x, (3, 3))))),
    "matmul_right": lambda x, c: T.sum_all(T.sigmoid(T.matmul(T.reshape(x, (3, 3)), c["W"]))),
    "relu": lambda x, c: T.sum_all(T.mul(T.relu(x), c["w"])),
    "sigmoid": lambda x, c: T.sum_all(T.mul(T.sigmoid(x), c["w"])),
    "tanh": lambda x, c: T.sum_all(T.mul(T.tanh(x), c["w"])),
    "concat": lambda x, c: T.sum_all(T.mul(T.concat([x, T.mul(x, x)], axis=0), T.concat([c["w"], c["w"]], axis=0))),
    "index": lambda x, c: T.sum_all(T.mul(x[np.array([0, 2, 2])], c["w"][:3])),
    "mean": lambda x, c: T.mean_all(T.mul(x, x)),
    "where": lambda x, c: T.sum_all(T.where(c["mask"], T.mul(x, x), T.tanh(x))),
    "softmax_ce": lambda x, c: T.softmax_cross_entropy(T.reshape(x, (3, 3)), np.array([0, 2, 1]))[0],
    "dropout_eval": lambda x, c: T.sum_all(T.mul(T.dropout(x, 0.5, training=False), c["w"])),
}


@pytest.mark.parametrize("op", sorted(OPS))
@pytest.mark.parametrize("seed", SEEDS)
def test_op_gradient(op, seed):
    rng = _rng(seed)
    c = {"b": rng.normal(size=9), "w": rng.normal(size=9), "m": rng.normal(size=(3, 9)),
         "W": rng.normal(size=(3, 4)), "mask": rng.random(9) < 0.5}
    if op == "broadcast_add":
        c["m"] = rng.normal(size=(2, 9))
        x = Tensor(rng.normal(size=(1, 9)))
    elif op == "matmul":
        c["m"] = rng.normal(size=(4, 3))
        x = Tensor(rng.normal(size=9))
    else:
        x = Tensor(_away_from_zero(rng, 9))
    assert gradient_check(lambda t: OPS[op](t, c), x) <= TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_conv_pool_gradient(seed):
    rng = _rng(seed)
    w = Tensor(rng.normal(size=(2, 1, 3, 3)))
    b = Tensor(rng.normal(size=2))
    x = Tensor(rng.normal(size=(1, 1, 6, 7)))

    def f_x(t):
        return T.sum_all(T.maxpool2d(T.conv2d(t, w, b)))

    def f_w(t):
        return T.sum_all(T.tanh(T.conv2d(x, t, b, stride=2)))
    assert gradient_check(f_x, x) <= TOL
    assert gradient_check(f_w, w) <= TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_embedding_gradient(seed):
    rng = _rng(seed)
    table = Tensor(rng.normal(size=(5, 3)))
    ids = np.array([[1, 2, 0], [4, 4, 3]])
    w = rng.normal(size=(2, 3, 3))
    err = gradient_check(lambda t: T.sum_all(T.mul(T.embedding(t, ids, pad_id=None), w)), table)
    assert err <= TOL


def test_spec_sigmoid_example():
    rng = _rng(0)
    W = rng.normal(size=(3, 3))
    assert gradient_check(lambda x: T.sum_all(T.sigmoid(T.matmul(W, T.reshape(x, (3, 1))))),
                          Tensor(rng.normal(size=3))) <= 1e-4


def test_linear_function_is_exact():
    rng = _rng(1)
    a = rng.normal(size=6)
    assert gradient_check(lambda x: T.sum_all(T.mul(x, a)), Tensor(rng.normal(size=6))) <= 1e-9


def test_relu_at_zero_is_reported():
    with pytest.raises(GradientCheckError):
        gradient_check(lambda x: T.sum_all(T.relu(x)), Tensor(np.array([1.0, 0.0])))


def test_dropout_rejected_in_gradient_check():
    with pytest.raises(GradientCheckError):
        gradient_check(lambda x: T.sum_all(T.dropout(x, 0.5, rng=np.random.default_rng(0))), Tensor(np.ones(3)))


# --- independent route: numpy forward + central differences --------------------------------------

def _conv_loop(x, w, b, s):
    H, W = x.shape
    k = w.shape[0]
    Ho, Wo = (H - k) // s + 1, (W - k) // s + 1
    out = np.empty((Ho, Wo))
    for i in range(Ho):
        for j in range(Wo):
            out[i, j] = (x[i * s:i * s + k, j * s:j * s + k] * w).sum() + b
    return out


def test_conv_backward_matches_loop_oracle():
    rng = _rng(2)
    x = rng.normal(size=(5, 6))
    w = rng.normal(size=(3, 3))
    coeff = rng.normal(size=(2, 2))
    analytic = _grad(lambda t: T.sum_all(T.mul(T.conv2d(T.reshape(t, (1, 1, 5, 6)),
                                                        Tensor(w[None, None]), Tensor([0.3]), 2)[0, 0], coeff)), x)
    numeric = central_difference(lambda v: float((_conv_loop(v, w, 0.3, 2) * coeff).sum()), x.copy())
    assert np.max(np.abs(analytic - numeric)) <= 1e-6
    assert np.allclose(T.conv2d(Tensor(x[None, None]), Tensor(w[None, None]), Tensor([0.3]), 2).values[0, 0],
                       _conv_loop(x, w, 0.3, 2), atol=1e-12)


def test_composite_backward_matches_central_difference():
    rng = _rng(3)
    W = rng.normal(size=(4, 3))
    y = np.array([1, 3])

    def np_loss(v):
        h = np.tanh(v.reshape(2, 4) @ W)
        z = np.concatenate([h, h * h], axis=1)[:, :4]
        z = z - z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        return float(-logp[np.arange(2), y].mean())

    def t_loss(t):
        h = T.tanh(T.matmul(T.reshape(t, (2, 4)), W))
        z = T.concat([h, T.mul(h, h)], axis=1)[:, :4]
        return T.softmax_cross_entropy(z, y)[0]

    x = rng.normal(size=8)
    assert np.max(np.abs(_grad(t_loss, x) - central_difference(np_loss, x.copy()))) <= 1e-7


# --- forward semantics ---------------------------------------------------------------------------

def test_backward_examples():
    assert _grad(T.sum_all, [1.0, 2.0, 3.0]).tolist() == [1.0, 1.0, 1.0]
    assert _grad(lambda x: T.sum_all(T.mul(x, x)), [1.0, 2.0]).tolist() == [2.0, 4.0]


def test_unused_input_gets_zero_grad():
    a = Tensor([1.0, 2.0], requires_grad=True)
    b = Tensor([3.0], requires_grad=True)
    with Tape() as tape:
        T.mul(b, 0.0)
        loss = T.sum_all(T.mul(a, a))
    backward(loss, tape)
    assert b.grad.tolist() == [0.0]


def test_backward_twice_errors():
    x = Tensor([1.0], requires_grad=True)
    with Tape() as tape:
        y = T.sum_all(T.mul(x, x))
    backward(y, tape)
    assert len(tape) == 0
    with pytest.raises(TensorError, match="consumed"):
        backward(y, tape)


def test_backward_requires_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        y = T.mul(x, x)
    with pytest.raises(TensorError, match="scalar"):
        backward(y, tape)


def test_shape_mismatch_reports_both_shapes():
    with pytest.raises(TensorError, match=r"\(2,\).*\(3,\)"):
        T.add(Tensor(np.ones(2)), Tensor(np.ones(3)))
    with pytest.raises(TensorError, match=r"\(2, 3\).*\(2, 3\)"):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_non_finite_rejected():
    with pytest.raises(NonFiniteError):
        T.add(Tensor([np.inf]), Tensor([1.0]))


def test_conv_shape_arithmetic():
    out = T.conv2d(Tensor(np.zeros((1, 1, 40, 300))), Tensor(np.zeros((1, 1, 3, 3))))
    assert out.shape == (1, 1, 38, 298)
    out = T.conv2d(Tensor(np.zeros((1, 1, 40, 300))), Tensor(np.zeros((1, 1, 5, 5))), stride=2)
    assert out.shape == (1, 1, 18, 148)
    with pytest.raises(TensorError):
        T.conv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 3, 3))))


def test_conv_constant_averaging():
    out = T.conv2d(Tensor(np.full((1, 1, 7, 9), 2.5)), Tensor(np.full((1, 1, 3, 3), 1 / 9)))
    assert np.allclose(out.values, 2.5, atol=1e-12, rtol=0)


def test_maxpool_example():
    assert T.maxpool2d(Tensor([[1.0, 2.0], [3.0, 4.0]])).values.tolist() == [[4.0]]
    assert T.maxpool2d(Tensor(np.arange(20.0).reshape(4, 5))).shape == (2, 2)


def test_softmax_ce_uniform():
    loss, probs = T.softmax_cross_entropy(Tensor(np.zeros((1, 4))), np.array([2]))
    assert abs(loss.item() - math.log(4)) <= 1e-12
    assert abs(loss.item() - 1.386294) < 1e-6
    assert np.allclose(probs, 0.25)


def test_softmax_rows_normalized():
    rng = _rng(4)
    _, probs = T.softmax_cross_entropy(Tensor(rng.normal(scale=30, size=(50, 4))), rng.integers(0, 4, 50))
    assert np.all(probs >= 0)
    assert np.max(np.abs(probs.sum(axis=1) - 1)) <= 1e-12


@pytest.mark.parametrize("rate", [0.5, 0.8])
def test_dropout_expectation(rate):
    x = np.array([0.5, -1.0, 2.0, 3.0])
    rng = np.random.default_rng(11)
    batch = np.broadcast_to(x, (100_000, 4))
    out = T.dropout(Tensor(batch), rate, training=True, rng=rng).values
    assert np.all(np.abs(out.mean(axis=0) - x) <= 0.02 * np.abs(x))
    survivors = out[out != 0]
    assert abs((out == 0).mean() - rate) < 0.01
    assert np.allclose(np.unique(np.abs(survivors)), np.abs(x) / (1 - rate))


def test_dropout_identity_at_inference_and_rate_bounds():
    x = Tensor(np.arange(5.0))
    assert T.dropout(x, 0.8, training=False) is x
    with pytest.raises(TensorError):
        T.dropout(x, 1.0)
    a = T.dropout(Tensor(np.ones(100)), 0.5, seed=3).values
    assert np.array_equal(a, T.dropout(Tensor(np.ones(100)), 0.5, seed=3).values)


def test_embedding_pad_row_gets_no_gradient():
    table = Tensor(np.ones((4, 2)), requires_grad=True)
    with Tape() as tape:
        loss = T.sum_all(T.embedding(table, np.array([[0, 1, 0, 3]])))
    backward(loss, tape)
    assert table.grad[0].tolist() == [0.0, 0.0] and table.grad[1].tolist() == [1.0, 1.0]
    assert table.grad[2].tolist() == [0.0, 0.0]


def test_array_serialization_round_trip():
    rng = _rng(5)
    for a in (rng.normal(size=(3, 4, 2)), np.array(2.5), np.zeros((0, 3))):
        buf = T.array_to_bytes(a)
        back, end = T.array_from_bytes(buf + b"tail")
        assert end == len(buf) and back.shape == a.shape and np.array_equal(back, a)
    # little-endian float64 after the header
    assert T.array_to_bytes(np.array([1.0]))[-8:] == np.array([1.0], dtype="<f8").tobytes()
