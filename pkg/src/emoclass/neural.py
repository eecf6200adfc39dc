"""Recurrent (LSTM, GRU and their bidirectional variants) and convolutional
sentence classifiers on top of :mod:`emoclass.tensor`, plus the two-member
BiLSTM + BiGRU vote.
"""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .corpus import LABEL_NAMES, N_LABELS
from .features import EMBED_DIM, DEFAULT_MAX_LEN, PAD_ID, EmbeddingTable

KINDS = ("cnn", "lstm", "gru", "bilstm", "bigru")
_GATES = {"lstm": 4, "gru": 3}


class NeuralError(ValueError):
    pass


class EmptySequenceWarning(UserWarning):
    """A row had no real tokens; its prediction is the uniform distribution."""


@dataclass
class NeuralArchitecture:
    kind: str
    vocab_size: int
    embed_dim: int = EMBED_DIM
    max_len: int = DEFAULT_MAX_LEN
    hidden_units: int = 128
    fc_units: int | None = None
    dropout: float | None = None
    filters: int = 32
    kernel_sizes: tuple = (3, 5)
    pool: int = 2
    output_units: int = N_LABELS
    trainable_embedding: bool = True
    label_names: tuple = LABEL_NAMES

    def __post_init__(self):
        if self.kind not in KINDS:
            raise NeuralError(f"unknown architecture {self.kind!r}; expected one of {KINDS}")
        if self.fc_units is None:
            self.fc_units = 50 if self.kind == "cnn" else 100
        if self.dropout is None:
            self.dropout = 0.8 if self.kind == "cnn" else 0.5
        self.kernel_sizes = tuple(int(k) for k in self.kernel_sizes)
        self.label_names = tuple(self.label_names)
        if self.output_units != N_LABELS:
            raise NeuralError(f"output layer must have {N_LABELS} units")
        for name in ("vocab_size", "embed_dim", "max_len", "hidden_units", "fc_units", "filters", "pool"):
            if int(getattr(self, name)) < 1:
                raise NeuralError(f"{name} must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise NeuralError("dropout must be in [0, 1)")
        if self.kind == "cnn":
            k = max(self.kernel_sizes)
            if self.max_len < k or self.embed_dim < k:
                raise NeuralError(f"cnn kernel {k}x{k} does not fit a {self.max_len}x{self.embed_dim} input")

    @property
    def recurrent(self) -> bool:
        return self.kind != "cnn"

    @property
    def bidirectional(self) -> bool:
        return self.kind.startswith("bi")

    @property
    def cell(self) -> str:
        return self.kind[2:] if self.bidirectional else self.kind

    def conv_output_shape(self, k: int) -> tuple[int, int]:
        h, w = self.max_len - k + 1, self.embed_dim - k + 1
        return (h - self.pool) // self.pool + 1, (w - self.pool) // self.pool + 1

    @property
    def representation_size(self) -> int:
        if self.recurrent:
            return self.hidden_units * (2 if self.bidirectional else 1)
        return sum(self.filters * int(np.prod(self.conv_output_shape(k))) for k in self.kernel_sizes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernel_sizes"] = list(self.kernel_sizes)
        d["label_names"] = list(self.label_names)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NeuralArchitecture":
        d = dict(d)
        d["kernel_sizes"] = tuple(d.get("kernel_sizes", (3, 5)))
        d["label_names"] = tuple(d.get("label_names", LABEL_NAMES))
        return cls(**d)


@dataclass
class NeuralModel:
    architecture: NeuralArchitecture
    params: dict = field(default_factory=dict)
    training: bool = False

    def state_arrays(self) -> dict:
        return {name: p.values.copy() for name, p in self.params.items()}

    def trainable(self) -> list[tuple[str, T.Tensor]]:
        return [(n, p) for n, p in self.params.items() if p.requires_grad]

    def n_parameters(self, prefix: str = "") -> int:
        return sum(p.size for n, p in self.params.items() if n.startswith(prefix))

    @classmethod
    def from_arrays(cls, arch: NeuralArchitecture, arrays: dict) -> "NeuralModel":
        ref = build_model(arch, seed=0)
        params = {}
        for name, p in ref.params.items():
            if name not in arrays:
                raise NeuralError(f"missing parameter {name!r}")
            a = np.asarray(arrays[name], dtype=np.float64)
            if a.shape != p.shape:
                raise NeuralError(f"parameter {name!r} has shape {a.shape}, expected {p.shape}")
            if not np.all(np.isfinite(a)):
                raise NeuralError(f"parameter {name!r} has non-finite values")
            params[name] = T.Tensor(a.copy(), requires_grad=p.requires_grad)
        return cls(arch, params)


def glorot(rng, shape, fan_in, fan_out) -> np.ndarray:
    r = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-r, r, size=shape)


def build_model(arch: NeuralArchitecture, seed: int = 0, embedding: EmbeddingTable | None = None) -> NeuralModel:
    """Fresh parameters. Biases start at zero, weights Glorot-uniform, all seeded."""
    rng = np.random.default_rng(seed)
    if embedding is None:
        emb = rng.uniform(-0.25, 0.25, size=(arch.vocab_size, arch.embed_dim))
    else:
        if embedding.matrix.shape != (arch.vocab_size, arch.embed_dim):
            raise NeuralError(f"embedding table {embedding.matrix.shape} does not match "
                              f"({arch.vocab_size}, {arch.embed_dim})")
        emb = embedding.matrix.copy()
    emb[PAD_ID] = 0.0
    params = {"embedding": T.Tensor(emb, requires_grad=arch.trainable_embedding)}
    if arch.recurrent:
        H, D, G = arch.hidden_units, arch.embed_dim, _GATES[arch.cell]
        for d in ("fw", "bw") if arch.bidirectional else ("fw",):
            params[f"{d}.W_x"] = T.Tensor(glorot(rng, (D, G * H), D, G * H), requires_grad=True)
            params[f"{d}.W_h"] = T.Tensor(glorot(rng, (H, G * H), H, G * H), requires_grad=True)
            params[f"{d}.b"] = T.Tensor(np.zeros(G * H), requires_grad=True)
    else:
        F = arch.filters
        for k in arch.kernel_sizes:
            params[f"conv{k}.W"] = T.Tensor(glorot(rng, (F, 1, k, k), k * k, F * k * k), requires_grad=True)
            params[f"conv{k}.b"] = T.Tensor(np.zeros(F), requires_grad=True)
    R, U = arch.representation_size, arch.fc_units
    params["fc.W"] = T.Tensor(glorot(rng, (R, U), R, U), requires_grad=True)
    params["fc.b"] = T.Tensor(np.zeros(U), requires_grad=True)
    params["out.W"] = T.Tensor(glorot(rng, (U, N_LABELS), U, N_LABELS), requires_grad=True)
    params["out.b"] = T.Tensor(np.zeros(N_LABELS), requires_grad=True)
    return NeuralModel(arch, params)


# --- cells -------------------------------------------------------------------------

def _lstm_cell(xproj, h, c, W_h):
    H = W_h.shape[0]
    z = xproj + T.matmul(h, W_h)
    i = T.sigmoid(z[..., 0:H])
    f = T.sigmoid(z[..., H:2 * H])
    g = T.tanh(z[..., 2 * H:3 * H])
    o = T.sigmoid(z[..., 3 * H:4 * H])
    c_new = f * c + i * g
    return o * T.tanh(c_new), c_new


def _gru_cell(xproj, h, W_h):
    H = W_h.shape[0]
    hz = T.matmul(h, W_h[:, 0:2 * H])
    z = T.sigmoid(xproj[..., 0:H] + hz[..., 0:H])
    r = T.sigmoid(xproj[..., H:2 * H] + hz[..., H:2 * H])
    cand = T.tanh(xproj[..., 2 * H:3 * H] + T.matmul(r * h, W_h[:, 2 * H:3 * H]))
    return (1.0 - z) * h + z * cand


def _param(params, name):
    v = params[name]
    return v if isinstance(v, T.Tensor) else T.Tensor(np.asarray(v, dtype=np.float64))


def lstm_step(x_t, h, c, params):
    """One LSTM step. ``params`` holds ``W_x`` (D, 4H), ``W_h`` (H, 4H), ``b`` (4H), gate order i, f, g, o."""
    xproj = T.matmul(T._as_tensor(x_t), _param(params, "W_x")) + _param(params, "b")
    return _lstm_cell(xproj, T._as_tensor(h), T._as_tensor(c), _param(params, "W_h"))


def gru_step(x_t, h, params):
    """One GRU step. ``params`` holds ``W_x`` (D, 3H), ``W_h`` (H, 3H), ``b`` (3H), gate order z, r, candidate."""
    xproj = T.matmul(T._as_tensor(x_t), _param(params, "W_x")) + _param(params, "b")
    return _gru_cell(xproj, T._as_tensor(h), _param(params, "W_h"))


# --- forward -----------------------------------------------------------------------

def infer_lengths(ids: np.ndarray) -> np.ndarray:
    """Position after the last non-pad id in each row."""
    nonpad = ids != PAD_ID
    last = ids.shape[1] - np.argmax(nonpad[:, ::-1], axis=1)
    return np.where(nonpad.any(axis=1), last, 0).astype(np.int64)


def reverse_unpadded(ids: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    out = np.full_like(ids, PAD_ID)
    for r, L in enumerate(lengths):
        out[r, :L] = ids[r, :L][::-1]
    return out


def _check_inputs(model, ids, lengths):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim == 1:
        ids = ids[None, :]
    if ids.ndim != 2:
        raise NeuralError(f"ids must be a 2-D batch, got shape {ids.shape}")
    V = model.architecture.vocab_size
    if ids.size and (ids.min() < 0 or ids.max() >= V):
        raise NeuralError(f"token ids must be in [0, {V})")
    lengths = infer_lengths(ids) if lengths is None else np.asarray(lengths, dtype=np.int64).reshape(-1)
    if len(lengths) != len(ids) or np.any(lengths < 0) or np.any(lengths > ids.shape[1]):
        raise NeuralError("lengths must be one value in [0, width] per row")
    return ids, lengths


def _run_direction(model, ids, lengths, prefix):
    arch = model.architecture
    H = arch.hidden_units
    B = len(ids)
    steps = int(lengths.max()) if B else 0
    W_x, W_h, b = (model.params[f"{prefix}.{n}"] for n in ("W_x", "W_h", "b"))
    h = T.Tensor(np.zeros((B, H)))
    c = T.Tensor(np.zeros((B, H)))
    if steps == 0:
        return h
    emb = T.embedding(model.params["embedding"], ids[:, :steps], PAD_ID)
    xproj = T.matmul(emb, W_x) + b
    for t in range(steps):
        live = (t < lengths)[:, None]
        if arch.cell == "lstm":
            h_new, c_new = _lstm_cell(xproj[:, t], h, c, W_h)
            c = T.where(live, c_new, c)
        else:
            h_new = _gru_cell(xproj[:, t], h, W_h)
        h = T.where(live, h_new, h)
    return h


def _fit_width(ids, max_len):
    width = ids.shape[1]
    if width > max_len:
        if np.any(ids[:, max_len:] != PAD_ID):
            raise NeuralError(f"sequence longer than max_len={max_len}")
        return ids[:, :max_len]
    if width < max_len:
        return np.concatenate([ids, np.full((len(ids), max_len - width), PAD_ID, dtype=np.int64)], axis=1)
    return ids


def _dense(x, model, name):
    return T.matmul(x, model.params[f"{name}.W"]) + model.params[f"{name}.b"]


def forward(model: NeuralModel, ids, lengths=None, training: bool | None = None, rng=None) -> T.Tensor:
    """Logits of shape (batch, 4). Dropout is active only when ``training``."""
    arch = model.architecture
    training = model.training if training is None else training
    ids, lengths = _check_inputs(model, ids, lengths)
    if arch.recurrent:
        rep = _run_direction(model, ids, lengths, "fw")
        if arch.bidirectional:
            rep = T.concat([rep, _run_direction(model, reverse_unpadded(ids, lengths), lengths, "bw")], axis=1)
        x = T.dropout(rep, arch.dropout, training, rng)
        x = T.dropout(T.relu(_dense(x, model, "fc")), arch.dropout, training, rng)
    else:
        ids = _fit_width(ids, arch.max_len)
        emb = T.embedding(model.params["embedding"], ids, PAD_ID)
        img = T.reshape(emb, (len(ids), 1, arch.max_len, arch.embed_dim))
        branches = []
        for k in arch.kernel_sizes:
            conv = T.conv2d(img, model.params[f"conv{k}.W"], model.params[f"conv{k}.b"], stride=1)
            pooled = T.maxpool2d(conv, arch.pool, arch.pool)
            branches.append(T.reshape(pooled, (len(ids), -1)))
        x = T.dropout(T.concat(branches, axis=1), arch.dropout, training, rng)
        x = T.relu(_dense(x, model, "fc"))
    return _dense(x, model, "out")


def run_sequence(model: NeuralModel, ids, lengths=None, return_flags: bool = False):
    """Per-label probabilities for a batch (inference mode).

    Rows with no real tokens get the uniform distribution and raise an
    :class:`EmptySequenceWarning`; ``return_flags`` also returns the boolean mask
    of such rows.
    """
    ids, lengths = _check_inputs(model, ids, lengths)
    probs = T.softmax(forward(model, ids, lengths, training=False).values)
    empty = lengths == 0
    if empty.any():
        probs[empty] = 1.0 / N_LABELS
        warnings.warn(f"{int(empty.sum())} empty sequence(s) given a uniform prediction",
                      EmptySequenceWarning, stacklevel=2)
    return (probs, empty) if return_flags else probs


def predict(model: NeuralModel, ids, lengths=None) -> tuple[np.ndarray, np.ndarray]:
    probs = run_sequence(model, ids, lengths)
    return np.argmax(probs, axis=1), probs


# --- ensemble ------------------------------------------------------------------------

def ensemble_vote(probs_a: np.ndarray, probs_b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Agreement label if both argmaxes agree, else argmax of the mean (ties to the lower label)."""
    probs_a, probs_b = np.atleast_2d(probs_a), np.atleast_2d(probs_b)
    if probs_a.shape != probs_b.shape:
        raise NeuralError("ensemble members produced different shapes")
    mean = (probs_a + probs_b) / 2.0
    la, lb = probs_a.argmax(axis=1), probs_b.argmax(axis=1)
    return np.where(la == lb, la, mean.argmax(axis=1)), mean


def ensemble_predict(models, ids, lengths=None) -> tuple[np.ndarray, np.ndarray]:
    if len(models) != 2:
        raise NeuralError("the ensemble takes exactly two members")
    a, b = models
    if a.architecture.label_names != b.architecture.label_names:
        raise NeuralError("ensemble members disagree on label order")
    return ensemble_vote(run_sequence(a, ids, lengths), run_sequence(b, ids, lengths))
