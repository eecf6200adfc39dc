"""Tape-based reverse-mode automatic differentiation over float64 numpy arrays.

Operations record themselves on the innermost active :class:`Tape` when any
input requires a gradient; outside a tape they run as plain numpy code, which
is how inference works::

    w = Tensor(np.zeros((3, 4)), requires_grad=True)
    with Tape() as tape:
        loss = sum_all(relu(matmul(x, w)))
    backward(loss, tape)
    w.grad
"""
from __future__ import annotations

import contextlib
import struct
import threading

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class TensorError(ValueError):
    pass


class NonFiniteError(ArithmeticError):
    pass


class GradientCheckError(ValueError):
    """A gradient check was asked to run at a non-differentiable point."""


class Tensor:
    __slots__ = ("values", "grad", "requires_grad", "_tape")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.array(values, dtype=np.float64) if not isinstance(values, np.ndarray) \
            or values.dtype != np.float64 else values
        self.requires_grad = requires_grad
        self.grad = None
        self._tape = None

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.values.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.values

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, key):
        return index(self, key)


class Tape:
    """Ordered record of executed operations, consumed by :func:`backward`."""

    def __init__(self):
        self.entries: list = []
        self.consumed = False

    def __enter__(self):
        _active().append(self)
        return self

    def __exit__(self, *exc):
        _active().remove(self)
        return False

    def __len__(self):
        return len(self.entries)


_LOCAL = threading.local()


def _active() -> list:
    if not hasattr(_LOCAL, "tapes"):
        _LOCAL.tapes = []
    return _LOCAL.tapes


def _is_checking() -> bool:
    return getattr(_LOCAL, "checking", False)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _finite(out: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(f"{op}: non-finite values in output")
    return out


def _result(values: np.ndarray, op: str, inputs, backward_fn) -> Tensor:
    """Wrap ``values`` and record ``backward_fn(grad_out)`` when needed."""
    out = Tensor(_finite(values, op))
    tapes = _active()
    if tapes and any(t.requires_grad for t in inputs):
        tape = tapes[-1]
        out.requires_grad = True
        out._tape = tape
        tape.entries.append((out, tuple(inputs), backward_fn))
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise TensorError(f"{op}: shape mismatch {a.shape} vs {b.shape}") from None


# --- elementwise ----------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "add")

    def back(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))
    return _result(a.values + b.values, "add", (a, b), back)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "sub")

    def back(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))
    return _result(a.values - b.values, "sub", (a, b), back)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "mul")

    def back(g):
        _accum(a, _unbroadcast(g * b.values, a.shape))
        _accum(b, _unbroadcast(g * a.values, b.shape))
    return _result(a.values * b.values, "mul", (a, b), back)


def relu(x) -> Tensor:
    x = _as_tensor(x)
    if _is_checking() and np.any(x.values == 0.0):
        raise GradientCheckError("relu evaluated exactly at 0, where it is not differentiable")
    mask = x.values > 0

    def back(g):
        _accum(x, g * mask)
    return _result(np.where(mask, x.values, 0.0), "relu", (x,), back)


def _sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    s = _sigmoid(x.values)

    def back(g):
        _accum(x, g * s * (1.0 - s))
    return _result(s, "sigmoid", (x,), back)


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    t = np.tanh(x.values)

    def back(g):
        _accum(x, g * (1.0 - t * t))
    return _result(t, "tanh", (x,), back)


def where(mask, a, b) -> Tensor:
    """Select ``a`` where ``mask`` is true, else ``b`` (mask is a constant)."""
    a, b = _as_tensor(a), _as_tensor(b)
    mask = np.asarray(mask, dtype=bool)

    def back(g):
        _accum(a, _unbroadcast(np.where(mask, g, 0.0), a.shape))
        _accum(b, _unbroadcast(np.where(mask, 0.0, g), b.shape))
    return _result(np.where(mask, a.values, b.values), "where", (a, b), back)


def dropout(x, rate: float, training: bool = True, rng=None, seed: int | None = None) -> Tensor:
    """Inverted dropout: identity at inference, survivors scaled by 1/(1-rate) in training."""
    x = _as_tensor(x)
    if not 0.0 <= rate < 1.0:
        raise TensorError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if _is_checking():
        raise GradientCheckError("dropout must be disabled during gradient checks")
    if rng is None:
        rng = np.random.default_rng(seed)
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)

    def back(g):
        _accum(x, g * keep)
    return _result(x.values * keep, "dropout", (x,), back)


# --- shape / linear algebra -----------------------------------------------------

def matmul(a, b) -> Tensor:
    """``a @ b`` for ``a`` of shape (..., n, k) and a 2-D ``b`` of shape (k, m)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if b.values.ndim != 2 or a.values.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise TensorError(f"matmul: shape mismatch {a.shape} vs {b.shape}")

    def back(g):
        if a.requires_grad:
            _accum(a, g @ b.values.T)
        if b.requires_grad:
            a2 = a.values.reshape(-1, a.shape[-1])
            _accum(b, a2.T @ g.reshape(-1, g.shape[-1]))
    return _result(a.values @ b.values, "matmul", (a, b), back)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.values for t in tensors], axis=axis)
    except ValueError:
        raise TensorError("concat: shape mismatch " + " vs ".join(str(t.shape) for t in tensors)) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def back(g):
        for t, piece in zip(tensors, np.split(g, bounds, axis=axis)):
            _accum(t, piece)
    return _result(out, "concat", tensors, back)


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    try:
        out = x.values.reshape(shape)
    except ValueError:
        raise TensorError(f"reshape: cannot reshape {x.shape} to {shape}") from None

    def back(g):
        _accum(x, g.reshape(x.shape))
    return _result(out, "reshape", (x,), back)


def index(x, key) -> Tensor:
    """Basic or advanced numpy indexing."""
    x = _as_tensor(x)
    out = x.values[key]

    advanced = any(isinstance(k, (list, np.ndarray)) for k in (key if isinstance(key, tuple) else (key,)))

    def back(g):
        if not x.requires_grad:
            return
        if x.grad is None:
            x.grad = np.zeros_like(x.values)
        if advanced:
            np.add.at(x.grad, key, g)
        else:
            x.grad[key] += g
    return _result(np.array(out, dtype=np.float64), "index", (x,), back)


def sum_all(x) -> Tensor:
    x = _as_tensor(x)

    def back(g):
        _accum(x, np.broadcast_to(g, x.shape))
    return _result(np.array(x.values.sum()), "sum", (x,), back)


def mean_all(x) -> Tensor:
    x = _as_tensor(x)
    n = x.size

    def back(g):
        _accum(x, np.broadcast_to(g / n, x.shape))
    return _result(np.array(x.values.mean()), "mean", (x,), back)


def embedding(table, ids, pad_id: int | None = 0) -> Tensor:
    """Row lookup ``table[ids]``; the padding row never receives gradient."""
    table = _as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise TensorError(f"embedding: ids outside [0, {table.shape[0]})")

    def back(g):
        if not table.requires_grad:
            return
        if table.grad is None:
            table.grad = np.zeros_like(table.values)
        keep = ids != pad_id if pad_id is not None else np.ones(ids.shape, dtype=bool)
        np.add.at(table.grad, ids[keep], g[keep])
    return _result(table.values[ids], "embedding", (table,), back)


# --- convolution ----------------------------------------------------------------

def conv2d(x, weight, bias=None, stride: int = 1) -> Tensor:
    """Valid (unpadded) 2-D cross-correlation.

    ``x``: (B, C, H, W); ``weight``: (F, C, k, k); ``bias``: (F,).
    Output: (B, F, (H-k)//stride+1, (W-k)//stride+1).
    """
    x, weight = _as_tensor(x), _as_tensor(weight)
    if stride < 1:
        raise TensorError("conv2d: stride must be >= 1")
    if x.values.ndim != 4 or weight.values.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise TensorError(f"conv2d: shape mismatch {x.shape} vs {weight.shape}")
    F, C, kh, kw = weight.shape
    B, _, H, W = x.shape
    if H < kh or W < kw:
        raise TensorError(f"conv2d: kernel {kh}x{kw} larger than input {H}x{W}")
    win = sliding_window_view(x.values, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    Ho, Wo = win.shape[2], win.shape[3]
    out = np.einsum("bchwij,fcij->bfhw", win, weight.values, optimize=True)
    inputs = [x, weight]
    if bias is not None:
        bias = _as_tensor(bias)
        out = out + bias.values[None, :, None, None]
        inputs.append(bias)

    def back(g):
        if weight.requires_grad:
            _accum(weight, np.einsum("bchwij,bfhw->fcij", win, g, optimize=True))
        if bias is not None and bias.requires_grad:
            _accum(bias, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dx = np.zeros_like(x.values)
            for i in range(kh):
                for j in range(kw):
                    dx[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += \
                        np.einsum("bfhw,fc->bchw", g, weight.values[:, :, i, j], optimize=True)
            _accum(x, dx)
    return _result(out, "conv2d", inputs, back)


def maxpool2d(x, size: int = 2, stride: int = 2) -> Tensor:
    """Max pooling over the last two axes; trailing rows/cols that do not fill a window are dropped."""
    x = _as_tensor(x)
    *lead, H, W = x.shape
    Ho, Wo = (H - size) // stride + 1, (W - size) // stride + 1
    if Ho < 1 or Wo < 1:
        raise TensorError(f"maxpool2d: window {size} larger than input {H}x{W}")
    win = sliding_window_view(x.values, (size, size), axis=(-2, -1))[..., ::stride, ::stride, :, :]
    flat = win.reshape(*win.shape[:-2], size * size)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    if _is_checking():
        top2 = np.sort(flat, axis=-1)[..., -2:]
        if np.any(top2[..., 1] - top2[..., 0] < 1e-4):
            raise GradientCheckError("maxpool2d window has a near tie; not differentiable there")

    def back(g):
        dx = np.zeros_like(x.values)
        di, dj = np.divmod(arg, size)
        hi = np.arange(Ho)[:, None] * stride + di
        wj = np.arange(Wo)[None, :] * stride + dj
        lead_idx = np.indices(tuple(lead)) if lead else ()
        idx = tuple(li[..., None, None] for li in lead_idx) + (hi, wj)
        np.add.at(dx, idx, g)
        _accum(x, dx)
    return _result(out, "maxpool2d", (x,), back)


# --- output layer -----------------------------------------------------------------

def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, targets) -> tuple[Tensor, np.ndarray]:
    """Mean cross-entropy over rows.

    ``targets`` is either an integer label vector or a one-hot/probability
    matrix with the same shape as ``logits``. Returns (scalar loss, probabilities).
    """
    logits = _as_tensor(logits)
    t = np.asarray(targets)
    if logits.values.ndim == 1:
        logits = reshape(logits, (1, -1))
        t = t.reshape(1, -1) if t.ndim == 1 else t.reshape(1)
    if t.ndim == 1:
        if t.shape[0] != logits.shape[0]:
            raise TensorError(f"softmax_cross_entropy: shape mismatch {logits.shape} vs {t.shape}")
        onehot = np.zeros(logits.shape)
        onehot[np.arange(len(t)), t.astype(np.int64)] = 1.0
    else:
        if t.shape != logits.shape:
            raise TensorError(f"softmax_cross_entropy: shape mismatch {logits.shape} vs {t.shape}")
        onehot = t.astype(np.float64)
    z = logits.values - logits.values.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    probs = np.exp(logp)
    n = logits.shape[0]
    loss = -(onehot * logp).sum() / n

    def back(g):
        _accum(logits, g * (probs * onehot.sum(axis=1, keepdims=True) - onehot) / n)
    return _result(np.array(loss), "softmax_cross_entropy", (logits,), back), probs


# --- backward / verification ------------------------------------------------------

def backward(loss: Tensor, tape: Tape | None = None) -> None:
    """Populate ``.grad`` on every gradient-requiring leaf recorded on ``tape``.

    Leaf gradients are overwritten, not accumulated across calls. The tape is
    cleared and cannot be replayed.
    """
    tape = tape if tape is not None else loss._tape
    if tape is None:
        raise TensorError("backward: loss was not computed under a tape")
    if tape.consumed:
        raise TensorError("backward: tape already consumed")
    if loss.size != 1:
        raise TensorError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not tape.entries:
        raise TensorError("backward: tape is empty")
    outputs = {id(out) for out, _, _ in tape.entries}
    for _, inputs, _ in tape.entries:
        for t in inputs:
            if t.requires_grad and id(t) not in outputs:
                t.grad = np.zeros_like(t.values)
    loss.grad = np.ones_like(loss.values)
    for out, _, fn in reversed(tape.entries):
        if out.grad is not None:
            fn(out.grad)
            if out is not loss:
                out.grad = None
    loss.grad = None
    tape.entries.clear()
    tape.consumed = True


@contextlib.contextmanager
def checking():
    """Flag non-differentiable evaluations (relu at 0, dropout, pooling ties) as errors."""
    prev = _is_checking()
    _LOCAL.checking = True
    try:
        yield
    finally:
        _LOCAL.checking = prev


def gradient_check(f, x: Tensor, eps: float = 1e-5) -> float:
    """Max relative error between backprop and central differences of scalar ``f`` at ``x``.

    Error per coordinate is ``|analytic - numeric| / max(1, |analytic|)``.
    """
    x = _as_tensor(x)
    was = x.requires_grad
    x.requires_grad = True
    try:
        with checking():
            with Tape() as tape:
                y = f(x)
            if y.size != 1:
                raise TensorError("gradient_check: f must be scalar-valued")
            if len(tape):
                backward(y, tape)
                analytic = x.grad.copy()
            else:
                analytic = np.zeros_like(x.values)
            numeric = np.zeros_like(x.values)
            flat, nflat = x.values.reshape(-1), numeric.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                fp = f(x).item()
                flat[i] = orig - eps
                fm = f(x).item()
                flat[i] = orig
                nflat[i] = (fp - fm) / (2 * eps)
    finally:
        x.requires_grad = was
    if not (np.all(np.isfinite(numeric)) and np.all(np.isfinite(analytic))):
        raise NonFiniteError("gradient_check: non-finite intermediate")
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    return float(err.max()) if err.size else 0.0


# --- serialization ----------------------------------------------------------------

def array_to_bytes(a: np.ndarray) -> bytes:
    """``uint32 ndim | uint64 shape[ndim] | float64 values`` (little-endian, row-major)."""
    a = np.asarray(a, dtype="<f8")
    return struct.pack(f"<I{a.ndim}Q", a.ndim, *a.shape) + a.tobytes(order="C")


def array_from_bytes(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    (ndim,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    shape = struct.unpack_from(f"<{ndim}Q", buf, offset)
    offset += 8 * ndim
    n = int(np.prod(shape)) if ndim else 1
    a = np.frombuffer(buf, dtype="<f8", count=n, offset=offset).reshape(shape).astype(np.float64)
    return a, offset + 8 * n
