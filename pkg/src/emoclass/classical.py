"""The six traditional classifiers: logistic regression, SVM, k-NN, naive Bayes,
decision tree and random forest.

All models share one contract: ``train_classical`` returns an immutable
:class:`ClassicalModel` whose learned state is a dict of numpy arrays (so it
serializes with the rest of the artifacts), and ``predict_classical`` returns
labels plus one score per emotion label in canonical order.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from . import kernels
from .corpus import N_LABELS
from .features import BowVector

log = logging.getLogger(__name__)

ALGORITHMS = ("logreg", "svm", "knn", "naive_bayes", "decision_tree", "random_forest")

DEFAULT_PARAMS = {
    "logreg": {"C": 1.0, "penalty": "l2", "solver": "lbfgs"},
    "svm": {"C": 1.0, "gamma": "scale", "kernel": "rbf"},
    "knn": {"n_neighbors": 5, "p": 2, "leaf_size": 30},
    "naive_bayes": {"variant": "multinomial", "alpha": 1.0},
    "decision_tree": {"max_depth": None, "min_samples_split": 2, "min_samples_leaf": 1},
    "random_forest": {"n_estimators": 100, "max_depth": None, "min_samples_split": 2, "min_samples_leaf": 1},
}

# best settings reported for the tweet corpus (10-fold grid search)
REFERENCE_BEST_PARAMS = {
    "logreg": {"C": 10, "solver": "liblinear", "penalty": "l2"},
    "svm": {"C": 1, "gamma": 0.1, "kernel": "rbf"},
    "knn": {"p": 2, "n_neighbors": 3, "leaf_size": 29},
    "decision_tree": {"max_depth": None, "min_samples_leaf": 1, "min_samples_split": 10},
    "random_forest": {"max_depth": None, "n_estimators": 300, "min_samples_split": 15, "min_samples_leaf": 2},
}

REFERENCE_GRIDS = {
    "logreg": {"C": [1000, 10, 1, 0.1, 0.01, 0.001], "penalty": ["l1", "l2"],
               "solver": ["liblinear", "lbfgs", "saga", "newton-cg", "sag"]},
    "svm": {"C": [10, 1, 0.1], "gamma": [1, 0.1, 0.001, 0.01], "kernel": ["sigmoid", "poly", "rbf", "linear"]},
    "knn": {"leaf_size": list(range(1, 51)), "n_neighbors": list(range(1, 31)), "p": [1, 2]},
    "decision_tree": {"max_depth": [None, 15, 30], "min_samples_split": [10, 2, 5, 15],
                      "min_samples_leaf": [5, 1, 2]},
    "random_forest": {"max_depth": [None, 15, 30], "n_estimators": [200, 100, 300],
                      "min_samples_leaf": [5, 2, 1], "min_samples_split": [15, 10, 2, 5]},
}

# solver aliases that accept each penalty (all route to one optimizer)
_SOLVER_PENALTIES = {
    "liblinear": {"l1", "l2"}, "saga": {"l1", "l2"},
    "lbfgs": {"l2"}, "newton-cg": {"l2"}, "sag": {"l2"},
}


class InvalidParams(ValueError):
    """Hyper-parameters outside an algorithm's valid surface."""


class ClassicalError(ValueError):
    pass


@dataclass
class ClassicalSpec:
    algorithm: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InvalidParams(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        merged = dict(DEFAULT_PARAMS[self.algorithm])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise InvalidParams(f"{self.algorithm}: unknown parameters {sorted(unknown)}")
        merged.update(self.params)
        self.params = merged
        self.validate()

    def validate(self) -> None:
        p, a = self.params, self.algorithm

        def positive(name, allow_zero=False):
            v = p[name]
            if isinstance(v, bool) or not isinstance(v, (int, float)) or (v < 0 if allow_zero else v <= 0):
                raise InvalidParams(f"{a}: {name} must be {'>= 0' if allow_zero else '> 0'}, got {v!r}")

        def at_least_one(name):
            v = p[name]
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise InvalidParams(f"{a}: {name} must be an integer >= 1, got {v!r}")

        if a == "logreg":
            positive("C")
            if p["penalty"] not in ("l1", "l2"):
                raise InvalidParams(f"logreg: penalty must be l1 or l2, got {p['penalty']!r}")
            if p["solver"] not in _SOLVER_PENALTIES:
                raise InvalidParams(f"logreg: unknown solver {p['solver']!r}")
            if p["penalty"] not in _SOLVER_PENALTIES[p["solver"]]:
                raise InvalidParams(f"logreg: solver {p['solver']} does not support penalty {p['penalty']}")
        elif a == "svm":
            positive("C")
            if p["gamma"] not in ("scale", "auto"):
                positive("gamma")
            if p["kernel"] not in ("linear", "rbf", "poly", "sigmoid"):
                raise InvalidParams(f"svm: unknown kernel {p['kernel']!r}")
        elif a == "knn":
            at_least_one("n_neighbors")
            at_least_one("leaf_size")
            if p["p"] not in (1, 2):
                raise InvalidParams(f"knn: p must be 1 or 2, got {p['p']!r}")
        elif a == "naive_bayes":
            if p["variant"] not in ("multinomial", "gaussian"):
                raise InvalidParams(f"naive_bayes: unknown variant {p['variant']!r}")
            positive("alpha", allow_zero=True)
        else:
            at_least_one("min_samples_split")
            at_least_one("min_samples_leaf")
            if p["max_depth"] is not None:
                at_least_one("max_depth")
            if a == "random_forest":
                at_least_one("n_estimators")

    def to_dict(self) -> dict:
        return {"algorithm": self.algorithm, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "ClassicalSpec":
        return cls(d["algorithm"], dict(d.get("params", {})))


@dataclass
class ClassicalModel:
    spec: ClassicalSpec
    n_features: int
    arrays: dict
    info: dict = field(default_factory=dict)

    def predict(self, X):
        return predict_classical(self, X)


def as_matrix(X) -> np.ndarray:
    """Dense float64 matrix from an array or a list of :class:`BowVector`."""
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], BowVector):
        return np.stack([v.dense() for v in X])
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ClassicalError(f"feature matrix must be 2-D, got shape {X.shape}")
    return X


def _majority(y: np.ndarray) -> int:
    return int(np.argmax(np.bincount(y, minlength=N_LABELS)))


# --- logistic regression -----------------------------------------------------------

def _logreg_binary(X, t, C, penalty, max_epochs=1000, tol=1e-6):
    """Minimise mean logistic loss + ||w||^2/(2Cn) (l2) or ||w||_1/(Cn) (l1).

    Gradient steps with Barzilai-Borwein initial step size and backtracking on
    the proximal sufficient-decrease condition, so the objective never increases.
    """
    n, d = X.shape
    lam = 1.0 / (C * n)

    def smooth(w, b):
        z = X @ w + b
        f = np.logaddexp(0.0, -t * z).mean()
        s = -t * _expit(-t * z) / n
        gw = X.T @ s
        gb = s.sum()
        if penalty == "l2":
            f += 0.5 * lam * (w @ w)
            gw = gw + lam * w
        return f, gw, gb

    def reg(w):
        return lam * np.abs(w).sum() if penalty == "l1" else 0.0

    def prox(w, step):
        if penalty == "l1":
            return np.sign(w) * np.maximum(np.abs(w) - step * lam, 0.0)
        return w

    w, b = np.zeros(d), 0.0
    f, gw, gb = smooth(w, b)
    history = [f + reg(w)]
    step = 1.0
    for _ in range(max_epochs):
        for _bt in range(80):
            w_new = prox(w - step * gw, step)
            b_new = b - step * gb
            dw, db = w_new - w, b_new - b
            f_new, gw_new, gb_new = smooth(w_new, b_new)
            if f_new <= f + gw @ dw + gb * db + (dw @ dw + db * db) / (2 * step) + 1e-15 * abs(f):
                break
            step *= 0.5
        else:
            break
        obj_new = f_new + reg(w_new)
        if obj_new > history[-1]:
            break
        sy = (gw_new - gw) @ dw + (gb_new - gb) * db
        ss = dw @ dw + db * db
        w, b, f, gw, gb = w_new, b_new, f_new, gw_new, gb_new
        history.append(obj_new)
        if abs(history[-2] - history[-1]) <= tol * max(1.0, abs(history[-2])):
            break
        step = ss / sy if sy > 1e-300 else step * 2.0
        step = min(max(step, 1e-10), 1e10)
    return w, b, history


def _expit(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _train_logreg(spec, X, y, seed):
    p = spec.params
    W = np.zeros((N_LABELS, X.shape[1]))
    b = np.zeros(N_LABELS)
    histories = []
    for k in range(N_LABELS):
        t = np.where(y == k, 1.0, -1.0)
        W[k], b[k], hist = _logreg_binary(X, t, float(p["C"]), p["penalty"])
        histories.append(hist)
    return {"weights": W, "bias": b}, {"epochs": [len(h) - 1 for h in histories],
                                       "objective_history": histories}


def _predict_logreg(model, X):
    probs = _expit(X @ model.arrays["weights"].T + model.arrays["bias"])
    return probs / probs.sum(axis=1, keepdims=True)


# --- support vector machine ----------------------------------------------------------

def _resolve_gamma(gamma, X):
    if gamma == "scale":
        var = X.var()
        return 1.0 / (X.shape[1] * var) if var > 0 else 1.0
    if gamma == "auto":
        return 1.0 / X.shape[1]
    return float(gamma)


def kernel_matrix(A, B, kernel, gamma, degree=3, coef0=0.0):
    if kernel == "linear":
        return A @ B.T
    if kernel == "rbf":
        return np.exp(-gamma * cdist(A, B, "sqeuclidean"))
    if kernel == "poly":
        return (gamma * (A @ B.T) + coef0) ** degree
    if kernel == "sigmoid":
        return np.tanh(gamma * (A @ B.T) + coef0)
    raise InvalidParams(f"unknown kernel {kernel!r}")


def _train_svm(spec, X, y, seed, tol=1e-3):
    p = spec.params
    gamma = _resolve_gamma(p["gamma"], X)
    C = float(p["C"])
    K = kernel_matrix(X, X, p["kernel"], gamma)
    n = len(y)
    coef = np.zeros((n, N_LABELS))
    rho = np.ones(N_LABELS)
    iterations, converged = [], []
    for k in range(N_LABELS):
        t = np.where(y == k, 1.0, -1.0)
        if np.all(t < 0):
            # label absent from training: constant decision value -1
            iterations.append(0)
            converged.append(True)
            continue
        Q = np.ascontiguousarray(t[:, None] * t[None, :] * K)
        alpha, r, it, ok = kernels.smo_solve(Q, t, C, tol, max(10_000_000, 100 * n))
        coef[:, k] = alpha * t
        rho[k] = r
        iterations.append(int(it))
        converged.append(bool(ok))
        if not ok:
            log.warning("svm: SMO hit the iteration cap for label %d", k)
    support = np.flatnonzero(np.any(coef != 0, axis=1))
    arrays = {"support_vectors": X[support], "dual_coef": coef[support], "rho": rho}
    return arrays, {"gamma": gamma, "iterations": iterations, "converged": converged,
                    "n_support": int(len(support))}


def _predict_svm(model, X):
    sv = model.arrays["support_vectors"]
    if len(sv) == 0:
        return np.tile(-model.arrays["rho"], (len(X), 1))
    K = kernel_matrix(X, sv, model.spec.params["kernel"], model.info["gamma"])
    return K @ model.arrays["dual_coef"] - model.arrays["rho"]


# --- k nearest neighbours --------------------------------------------------------------

def _minkowski(A, B, p):
    return cdist(A, B, "cityblock" if p == 1 else "euclidean")


def knn_neighbors(points, query, k: int, p: int = 2) -> list[tuple[int, float]]:
    """Exact k nearest stored points under the Minkowski-p distance.

    Ties are broken by lower index.
    """
    points = np.asarray(points, dtype=np.float64)
    if k > len(points):
        raise ClassicalError(f"k={k} exceeds the {len(points)} stored points")
    if k < 1:
        raise ClassicalError("k must be >= 1")
    d = _minkowski(np.asarray(query, dtype=np.float64).reshape(1, -1), points, p)[0]
    order = np.argsort(d, kind="stable")[:k]
    return [(int(i), float(d[i])) for i in order]


def _predict_knn(model, X):
    stored, labels = model.arrays["points"], model.arrays["labels"].astype(np.int64)
    k = min(int(model.spec.params["n_neighbors"]), len(stored))
    scores = np.zeros((len(X), N_LABELS))
    for start in range(0, len(X), 256):
        D = _minkowski(X[start:start + 256], stored, model.spec.params["p"])
        nn = np.argsort(D, axis=1, kind="stable")[:, :k]
        dist = np.take_along_axis(D, nn, axis=1)
        zero = dist == 0
        with np.errstate(divide="ignore"):
            w = np.where(zero.any(axis=1, keepdims=True), zero.astype(float), 1.0 / dist)
        block = scores[start:start + 256]
        for c in range(N_LABELS):
            block[:, c] = (w * (labels[nn] == c)).sum(axis=1)
        block /= block.sum(axis=1, keepdims=True)
    return scores


# --- naive Bayes ---------------------------------------------------------------------

_LOG_FLOOR = math.log(1e-300)


def _train_nb(spec, X, y, seed):
    counts = np.bincount(y, minlength=N_LABELS).astype(float)
    with np.errstate(divide="ignore"):
        log_prior = np.log(counts / counts.sum())
    if spec.params["variant"] == "multinomial":
        if np.any(X < 0):
            raise ClassicalError("multinomial naive Bayes needs non-negative count features")
        alpha = float(spec.params["alpha"])
        fc = np.stack([X[y == k].sum(axis=0) for k in range(N_LABELS)]) + alpha
        with np.errstate(divide="ignore", invalid="ignore"):
            log_theta = np.log(fc / fc.sum(axis=1, keepdims=True))
        log_theta = np.where(np.isfinite(log_theta), log_theta, _LOG_FLOOR)
        return {"log_prior": log_prior, "log_theta": log_theta}, {}
    means = np.zeros((N_LABELS, X.shape[1]))
    var = np.ones((N_LABELS, X.shape[1]))
    eps = max(1e-9 * float(X.var(axis=0).max()), 1e-12)
    for k in range(N_LABELS):
        rows = X[y == k]
        if len(rows):
            means[k] = rows.mean(axis=0)
            var[k] = rows.var(axis=0)
    return {"log_prior": log_prior, "means": means, "var": var + eps}, {"var_smoothing": eps}


def _nb_joint_log_likelihood(model, X):
    a = model.arrays
    if model.spec.params["variant"] == "multinomial":
        jll = X @ a["log_theta"].T + a["log_prior"]
    else:
        jll = np.stack([
            -0.5 * np.sum(np.log(2.0 * np.pi * a["var"][k]))
            - 0.5 * np.sum((X - a["means"][k]) ** 2 / a["var"][k], axis=1)
            for k in range(N_LABELS)], axis=1) + a["log_prior"]
    return jll


def _predict_nb(model, X):
    jll = _nb_joint_log_likelihood(model, X)
    jll = jll - jll.max(axis=1, keepdims=True)
    p = np.exp(jll)
    return p / p.sum(axis=1, keepdims=True)


# --- trees -----------------------------------------------------------------------------

@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    decrease: float


def _encode_labels(labels):
    labels = np.asarray(labels)
    if np.issubdtype(labels.dtype, np.integer):
        return labels.astype(np.int64), int(labels.max()) + 1 if labels.size else 0
    _, codes = np.unique(labels, return_inverse=True)
    return codes.astype(np.int64), int(codes.max()) + 1


def _best_split(X, y, n_classes, min_leaf):
    n = len(y)
    counts = np.bincount(y, minlength=n_classes)
    if n < 2 or np.count_nonzero(counts) <= 1:
        return None
    X = np.ascontiguousarray(X, dtype=np.float64)
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").astype(np.int64))
    col, thr, score = kernels.gini_scan(X, order, np.ascontiguousarray(y), n_classes, int(min_leaf), 1e-12)
    if col < 0:
        return None
    decrease = score / n - float((counts.astype(np.float64) ** 2).sum()) / (n * n)
    return Split(int(col), float(thr), max(float(decrease), 0.0))


def gini_best_split(feature_columns, labels, min_samples_leaf: int = 1) -> Split | None:
    """Exhaustive Gini split over midpoints of sorted unique feature values.

    ``feature_columns`` is an ``(n_samples, n_features)`` array. Returns
    ``None`` ("leaf") when the labels are pure or no boundary leaves at least
    ``min_samples_leaf`` samples on each side. Ties go to the lowest feature
    index, then the lowest threshold.
    """
    X = np.asarray(feature_columns, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y, n_classes = _encode_labels(labels)
    if len(y) != len(X):
        raise ClassicalError("feature rows and labels differ in length")
    return _best_split(X, y, n_classes, min_samples_leaf)


def _grow_tree(X, y, params, rng=None, max_features=None):
    """CART tree as flat arrays; nodes in depth-first pre-order."""
    max_depth = params["max_depth"]
    min_split = int(params["min_samples_split"])
    min_leaf = int(params["min_samples_leaf"])
    feature, threshold, left, right, value = [], [], [], [], []
    d = X.shape[1]
    stack = [(np.arange(len(y)), 0, -1, False)]
    while stack:
        idx, depth, parent, is_right = stack.pop()
        node = len(feature)
        if parent >= 0:
            (right if is_right else left)[parent] = node
        counts = np.bincount(y[idx], minlength=N_LABELS).astype(float)
        value.append(counts / counts.sum())
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        if (max_depth is not None and depth >= max_depth) or len(idx) < min_split:
            continue
        if max_features is None:
            feats = np.arange(d)
        else:
            feats = np.sort(rng.choice(d, size=max_features, replace=False))
        split = _best_split(X[np.ix_(idx, feats)], y[idx], N_LABELS, min_leaf)
        if split is None:
            continue
        f = int(feats[split.feature])
        feature[node] = f
        threshold[node] = split.threshold
        go_left = X[idx, f] <= split.threshold
        stack.append((idx[~go_left], depth + 1, node, True))
        stack.append((idx[go_left], depth + 1, node, False))
    return {
        "feature": np.array(feature, dtype=np.float64),
        "threshold": np.array(threshold),
        "left": np.array(left, dtype=np.float64),
        "right": np.array(right, dtype=np.float64),
        "value": np.array(value),
    }


def _tree_leaves(tree, X, offset=0):
    feature = tree["feature"].astype(np.int64)
    left = tree["left"].astype(np.int64)
    right = tree["right"].astype(np.int64)
    node = np.full(len(X), offset, dtype=np.int64)
    active = feature[node] >= 0
    while active.any():
        rows = np.flatnonzero(active)
        nd = node[rows]
        go_left = X[rows, feature[nd]] <= tree["threshold"][nd]
        node[rows] = np.where(go_left, left[nd], right[nd]) + offset
        active[rows] = feature[node[rows]] >= 0
    return node


def tree_depth(tree) -> int:
    left, right = tree["left"].astype(int), tree["right"].astype(int)
    depth = {0: 0}
    best = 0
    for node in range(len(left)):
        for child in (left[node], right[node]):
            if child >= 0:
                depth[child] = depth[node] + 1
                best = max(best, depth[child])
    return best


def _train_tree(spec, X, y, seed):
    tree = _grow_tree(X, y, spec.params)
    return tree, {"n_nodes": int(len(tree["feature"])), "depth": tree_depth(tree)}


def _predict_tree(model, X):
    return model.arrays["value"][_tree_leaves(model.arrays, X)]


def _train_forest(spec, X, y, seed):
    rng = np.random.default_rng(seed)
    n, d = X.shape
    max_features = max(1, int(math.isqrt(d)))
    trees = []
    for _ in range(int(spec.params["n_estimators"])):
        boot = rng.integers(0, n, size=n)
        tree_rng = np.random.default_rng(rng.integers(0, 2**63 - 1))
        trees.append(_grow_tree(X[boot], y[boot], spec.params, tree_rng, max_features))
    offsets = np.cumsum([0] + [len(t["feature"]) for t in trees[:-1]])
    arrays = {key: np.concatenate([t[key] for t in trees]) for key in trees[0]}
    arrays["tree_offsets"] = offsets.astype(np.float64)
    return arrays, {"n_trees": len(trees), "max_features": max_features}


def forest_trees(model: ClassicalModel) -> list[dict]:
    a = model.arrays
    offsets = list(a["tree_offsets"].astype(int)) + [len(a["feature"])]
    trees = []
    for lo, hi in zip(offsets[:-1], offsets[1:]):
        t = {key: a[key][lo:hi] for key in ("feature", "threshold", "left", "right", "value")}
        trees.append(t)
    return trees


def _predict_forest(model, X):
    trees = forest_trees(model)
    scores = np.zeros((len(X), N_LABELS))
    for t in trees:
        scores += t["value"][_tree_leaves(t, X)]
    return scores / len(trees)


# --- dispatch ----------------------------------------------------------------------------

_TRAIN = {"logreg": _train_logreg, "svm": _train_svm, "knn": None, "naive_bayes": _train_nb,
          "decision_tree": _train_tree, "random_forest": _train_forest}
_PREDICT = {"logreg": _predict_logreg, "svm": _predict_svm, "knn": _predict_knn,
            "naive_bayes": _predict_nb, "decision_tree": _predict_tree, "random_forest": _predict_forest}


def train_classical(spec: ClassicalSpec, X, y, seed: int = 0) -> ClassicalModel:
    """Fit one classifier. Deterministic in (spec, data, seed).

    A single training sample or a single distinct label yields a majority-label
    predictor instead of an error.
    """
    if isinstance(spec, dict):
        spec = ClassicalSpec.from_dict(spec)
    X = as_matrix(X)
    y = np.asarray([int(v) for v in y], dtype=np.int64)
    if len(X) != len(y):
        raise ClassicalError(f"{len(X)} feature rows but {len(y)} labels")
    if len(y) == 0:
        raise ClassicalError("no training samples")
    if np.any((y < 0) | (y >= N_LABELS)):
        raise ClassicalError("labels must be emotion indices 0..3")
    if not np.all(np.isfinite(X)):
        raise ClassicalError("feature matrix has non-finite values")
    if len(y) < 2 or len(np.unique(y)) == 1:
        return ClassicalModel(spec, X.shape[1], {}, {"majority": _majority(y)})
    if spec.algorithm == "knn":
        return ClassicalModel(spec, X.shape[1], {"points": X.copy(), "labels": y.astype(np.float64)},
                              {"note": "leaf_size is accepted but unused: search is exact brute force"})
    arrays, info = _TRAIN[spec.algorithm](spec, X, y, seed)
    return ClassicalModel(spec, X.shape[1], arrays, info)


def predict_scores(model: ClassicalModel, X) -> np.ndarray:
    X = as_matrix(X)
    if X.shape[1] != model.n_features:
        raise ClassicalError(f"model expects {model.n_features} features, got {X.shape[1]}")
    if "majority" in model.info:
        out = np.zeros((len(X), N_LABELS))
        out[:, model.info["majority"]] = 1.0
        return out
    return _PREDICT[model.spec.algorithm](model, X)


def predict_classical(model: ClassicalModel, X) -> tuple[np.ndarray, np.ndarray]:
    """Labels (argmax, ties to the lowest label index) and per-label scores.

    Scores are probabilities for logreg, naive Bayes and forests, signed
    decision values for SVMs, normalised inverse-distance weights for k-NN and
    leaf class frequencies for a single tree.
    """
    scores = predict_scores(model, X)
    return np.argmax(scores, axis=1), scores
