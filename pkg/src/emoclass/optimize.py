"""Mini-batch training for the neural models, k-fold grid search for the classical ones."""
from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .classical import ClassicalSpec, InvalidParams, predict_classical, train_classical, as_matrix
from .neural import NeuralModel, forward

log = logging.getLogger(__name__)

OPTIMIZERS = ("adam", "sgd")


class TrainingDiverged(ArithmeticError):
    """Non-finite loss or gradient; carries the epoch and batch where it happened."""

    def __init__(self, epoch: int, batch: int, detail: str = ""):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}" + (f": {detail}" if detail else ""))
        self.epoch = epoch
        self.batch = batch


class GridError(ValueError):
    pass


def max_workers() -> int:
    raw = os.environ.get("EMOCLASS_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass
class TrainConfig:
    batch_size: int = 16
    learning_rate: float = 0.001
    epochs: int = 35
    optimizer: str = "adam"
    seed: int = 0
    shuffle_each_epoch: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if isinstance(self.batch_size, bool) or int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ValueError(f"batch_size must be an integer >= 1, got {self.batch_size!r}")
        if not (isinstance(self.learning_rate, (int, float)) and self.learning_rate > 0
                and math.isfinite(self.learning_rate)):
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate!r}")
        if isinstance(self.epochs, bool) or int(self.epochs) != self.epochs or self.epochs < 1:
            raise ValueError(f"epochs must be an integer >= 1, got {self.epochs!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    train_accuracy: list = field(default_factory=list)
    validation_loss: list = field(default_factory=list)
    validation_accuracy: list = field(default_factory=list)
    steps: int = 0

    @property
    def epochs(self) -> int:
        return len(self.train_loss)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EncodedSet:
    """Id matrix, true lengths and integer labels for one data split."""

    ids: np.ndarray
    lengths: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.lengths = np.asarray(self.lengths, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if not (len(self.ids) == len(self.lengths) == len(self.labels)):
            raise ValueError("ids, lengths and labels differ in length")

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, idx) -> "EncodedSet":
        return EncodedSet(self.ids[idx], self.lengths[idx], self.labels[idx])


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params, self.lr, self.b1, self.b2, self.eps = params, lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.values) for p in params]
        self.v = [np.zeros_like(p.values) for p in params]
        self.t = 0

    def step(self):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                continue
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.values -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, params, lr):
        self.params, self.lr = params, lr

    def step(self):
        for p in self.params:
            if p.grad is not None:
                p.values -= self.lr * p.grad


def make_optimizer(params, config: TrainConfig):
    if config.optimizer == "adam":
        return Adam(params, config.learning_rate, config.beta1, config.beta2, config.eps)
    return SGD(params, config.learning_rate)


def evaluate_loss(model: NeuralModel, data: EncodedSet, batch_size: int = 256) -> tuple[float, float]:
    """Mean cross-entropy and accuracy in inference mode."""
    total, correct = 0.0, 0
    for start in range(0, len(data), batch_size):
        part = data.take(slice(start, start + batch_size))
        loss, probs = T.softmax_cross_entropy(forward(model, part.ids, part.lengths, training=False), part.labels)
        total += loss.item() * len(part)
        correct += int((probs.argmax(axis=1) == part.labels).sum())
    return total / len(data), correct / len(data)


def train(model: NeuralModel, train_set: EncodedSet, validation_set: EncodedSet,
          config: TrainConfig | None = None, on_epoch=None) -> tuple[NeuralModel, TrainHistory]:
    """Train in place for ``config.epochs`` epochs and return the last-epoch model.

    Batches are mean cross-entropy; with shuffling, epoch order comes from a
    generator seeded by ``config.seed`` (dropout masks use a second stream).
    """
    config = config or TrainConfig()
    if len(train_set) == 0 or len(validation_set) == 0:
        raise ValueError("training and validation sets must be non-empty")
    order_rng = np.random.default_rng([config.seed, 0])
    drop_rng = np.random.default_rng([config.seed, 1])
    params = [p for _, p in model.trainable()]
    opt = make_optimizer(params, config)
    history = TrainHistory()
    n = len(train_set)
    model.training = True
    try:
        for epoch in range(1, config.epochs + 1):
            order = order_rng.permutation(n) if config.shuffle_each_epoch else np.arange(n)
            loss_sum, correct = 0.0, 0
            for b, start in enumerate(range(0, n, config.batch_size), start=1):
                batch = train_set.take(order[start:start + config.batch_size])
                if len(batch) == 0:
                    raise ValueError(f"empty batch at epoch {epoch}, batch {b}")
                try:
                    with T.Tape() as tape:
                        logits = forward(model, batch.ids, batch.lengths, training=True, rng=drop_rng)
                        loss, probs = T.softmax_cross_entropy(logits, batch.labels)
                    T.backward(loss, tape)
                except T.NonFiniteError as exc:
                    raise TrainingDiverged(epoch, b, str(exc)) from exc
                if not all(np.all(np.isfinite(p.grad)) for p in params if p.grad is not None):
                    raise TrainingDiverged(epoch, b, "non-finite gradient")
                opt.step()
                history.steps += 1
                loss_sum += loss.item() * len(batch)
                correct += int((probs.argmax(axis=1) == batch.labels).sum())
            model.training = False
            val_loss, val_acc = evaluate_loss(model, validation_set)
            model.training = True
            history.train_loss.append(loss_sum / n)
            history.train_accuracy.append(correct / n)
            history.validation_loss.append(val_loss)
            history.validation_accuracy.append(val_acc)
            log.info("epoch %d: loss %.4f acc %.4f val_loss %.4f val_acc %.4f",
                     epoch, loss_sum / n, correct / n, val_loss, val_acc)
            if on_epoch is not None:
                on_epoch(epoch, history)
    finally:
        model.training = False
    return model, history


# --- cross-validation ---------------------------------------------------------------

def kfold_split(n: int, k: int, seed: int = 0) -> list[np.ndarray]:
    """``k`` disjoint folds covering ``0..n-1``; sizes differ by at most one."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if n < k:
        raise ValueError(f"cannot split {n} samples into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


@dataclass
class GridSpec:
    params: dict

    def __post_init__(self):
        if not self.params:
            raise GridError("grid is empty")
        for name, values in self.params.items():
            if not isinstance(values, list) or not values:
                raise GridError(f"grid entry {name!r} must be a non-empty list")

    @classmethod
    def from_json(cls, path) -> "GridSpec":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise GridError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(data, dict):
            raise GridError(f"{path}: expected a JSON object of parameter lists")
        return cls(data)

    def combinations(self) -> list[dict]:
        names = list(self.params)
        return [dict(zip(names, vals)) for vals in itertools.product(*(self.params[n] for n in names))]

    def __len__(self) -> int:
        return math.prod(len(v) for v in self.params.values())


@dataclass
class CVResult:
    combinations: list
    fold_accuracies: np.ndarray
    skipped: list = field(default_factory=list)

    @property
    def mean_accuracies(self) -> np.ndarray:
        return self.fold_accuracies.mean(axis=1)

    @property
    def best_index(self) -> int:
        return int(np.argmax(self.mean_accuracies))

    @property
    def best_params(self) -> dict:
        return dict(self.combinations[self.best_index])

    @property
    def best_accuracy(self) -> float:
        return float(self.mean_accuracies[self.best_index])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["combination", "fold", "accuracy"])
            for combo, accs in zip(self.combinations, self.fold_accuracies):
                key = json.dumps(combo, sort_keys=True, separators=(",", ":"))
                for fold, acc in enumerate(accs):
                    w.writerow([key, fold, repr(float(acc))])

    def summary(self) -> dict:
        return {"best_params": self.best_params, "best_mean_accuracy": self.best_accuracy,
                "n_combinations": len(self.combinations), "n_folds": int(self.fold_accuracies.shape[1]),
                "skipped": [{"params": c, "reason": r} for c, r in self.skipped]}


def _valid_specs(algorithm: str, base: dict, grid: GridSpec):
    specs, combos, skipped = [], [], []
    for combo in grid.combinations():
        try:
            specs.append(ClassicalSpec(algorithm, {**base, **combo}))
            combos.append(combo)
        except InvalidParams as exc:
            log.info("skipping invalid combination %s: %s", combo, exc)
            skipped.append((combo, str(exc)))
    if not specs:
        raise GridError("every grid combination is invalid")
    if skipped:
        log.warning("%s: skipped %d invalid combination(s)", algorithm, len(skipped))
    return specs, combos, skipped


def grid_search_cv(template, grid, X, y, k: int = 10, seed: int = 0, workers: int | None = None) -> CVResult:
    """Mean k-fold validation accuracy of every valid combination.

    ``template`` is a :class:`ClassicalSpec` (its params are the base the grid
    overrides) or an algorithm name. All combinations share the same folds.
    """
    if isinstance(template, str):
        template = ClassicalSpec(template)
    grid = grid if isinstance(grid, GridSpec) else GridSpec(dict(grid))
    X = as_matrix(X)
    y = np.asarray([int(v) for v in y], dtype=np.int64)
    specs, combos, skipped = _valid_specs(template.algorithm, template.params, grid)
    folds = kfold_split(len(y), k, seed)
    acc = np.zeros((len(specs), k))

    def run(job):
        c, f = job
        val = folds[f]
        tr = np.concatenate([folds[g] for g in range(k) if g != f])
        model = train_classical(specs[c], X[tr], y[tr], seed=seed)
        pred, _ = predict_classical(model, X[val])
        acc[c, f] = float(np.mean(pred == y[val]))

    jobs = [(c, f) for c in range(len(specs)) for f in range(k)]
    workers = workers or max_workers()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(run, jobs))
    else:
        for job in jobs:
            run(job)
    return CVResult(combos, acc, skipped)


def grid_search_neural(build, grid, train_set: EncodedSet, validation_set: EncodedSet,
                       base: TrainConfig | None = None) -> CVResult:
    """Hold-out search over training options (e.g. batch size and learning rate).

    ``build(seed)`` returns a fresh model; each combination overrides fields of
    ``base``. The single "fold" is the final validation accuracy.
    """
    grid = grid if isinstance(grid, GridSpec) else GridSpec(dict(grid))
    base = base or TrainConfig()
    combos = grid.combinations()
    acc = np.zeros((len(combos), 1))
    for c, combo in enumerate(combos):
        config = TrainConfig(**{**base.to_dict(), **combo})
        _, hist = train(build(config.seed), train_set, validation_set, config)
        acc[c, 0] = hist.validation_accuracy[-1]
    return CVResult(combos, acc, [])
