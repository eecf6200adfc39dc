from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from emoclass.classical import (ALGORITHMS, REFERENCE_BEST_PARAMS, REFERENCE_GRIDS, ClassicalError, ClassicalSpec,
                                InvalidParams, forest_trees, gini_best_split, kernel_matrix, knn_neighbors,
                                predict_classical, predict_scores, train_classical, tree_depth)
from emoclass.features import build_vocabulary, bow_matrix, vectorize_bow
from emoclass.textprep import TokenizedDocument
import oracles


def _blobs(n=40, seed=0, d=2, sep=4.0):
    rng = np.random.default_rng(seed)
    centers = np.eye(4, d) * sep if d >= 4 else np.array([[0, 0], [sep, 0], [0, sep], [sep, sep]])[:, :d]
    y = np.repeat(np.arange(4), n // 4)
    return centers[y] + rng.normal(scale=0.5, size=(len(y), d)), y


# --- specs -----------------------------------------------------------------------------------

def test_best_params_parse():
    for algo, params in REFERENCE_BEST_PARAMS.items():
        spec = ClassicalSpec(algo, params)
        for key, value in params.items():
            assert spec.params[key] == value
    assert REFERENCE_BEST_PARAMS["svm"] == {"C": 1, "gamma": 0.1, "kernel": "rbf"}
    assert REFERENCE_BEST_PARAMS["knn"] == {"p": 2, "n_neighbors": 3, "leaf_size": 29}
    assert REFERENCE_BEST_PARAMS["decision_tree"]["min_samples_split"] == 10
    assert REFERENCE_BEST_PARAMS["random_forest"]["n_estimators"] == 300


@pytest.mark.parametrize("algo, params", [
    ("logreg", {"C": 0}), ("logreg", {"penalty": "l3"}), ("logreg", {"penalty": "l1", "solver": "lbfgs"}),
    ("svm", {"gamma": -1}), ("svm", {"kernel": "cubic"}), ("knn", {"n_neighbors": 0}), ("knn", {"p": 3}),
    ("naive_bayes", {"alpha": -0.1}), ("decision_tree", {"min_samples_leaf": 0}),
    ("random_forest", {"n_estimators": 0}), ("decision_tree", {"bogus": 1}), ("nope", {}),
])
def test_invalid_params(algo, params):
    with pytest.raises(InvalidParams):
        ClassicalSpec(algo, params)


def test_logreg_grid_has_invalid_pairs():
    n_valid = 0
    for C in REFERENCE_GRIDS["logreg"]["C"]:
        for pen in REFERENCE_GRIDS["logreg"]["penalty"]:
            for solver in REFERENCE_GRIDS["logreg"]["solver"]:
                try:
                    ClassicalSpec("logreg", {"C": C, "penalty": pen, "solver": solver})
                    n_valid += 1
                except InvalidParams:
                    pass
    assert n_valid == 60 - 18


def test_spec_round_trip():
    spec = ClassicalSpec("svm", {"C": 10})
    assert ClassicalSpec.from_dict(spec.to_dict()) == spec


# --- training behaviour ------------------------------------------------------------------------

def test_logreg_separable_toy():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [3.0, 3.0], [3.0, 4.0], [-3.0, 3.0], [-3.0, 4.0], [3.0, -3.0], [4.0, -3.0]])
    y = np.array([0, 0, 1, 1, 2, 2, 3, 3])
    model = train_classical(ClassicalSpec("logreg", {"C": 10, "penalty": "l2"}), X, y)
    labels, _ = predict_classical(model, X)
    assert (labels == y).all()


@pytest.mark.parametrize("penalty, solver", [("l2", "lbfgs"), ("l1", "liblinear")])
def test_logreg_objective_monotone(penalty, solver):
    X, y = _blobs(80, seed=1, sep=1.5)
    model = train_classical(ClassicalSpec("logreg", {"C": 1.0, "penalty": penalty, "solver": solver}), X, y)
    for hist in model.info["objective_history"]:
        h = np.asarray(hist)
        assert np.all(np.diff(h) <= 1e-12 * np.maximum(1.0, np.abs(h[:-1])))


def test_l1_produces_sparsity():
    rng = np.random.default_rng(2)
    X = np.hstack([_blobs(80, seed=2)[0], rng.normal(size=(80, 10))])
    y = _blobs(80, seed=2)[1]
    l1 = train_classical(ClassicalSpec("logreg", {"C": 0.05, "penalty": "l1", "solver": "saga"}), X, y)
    assert np.sum(l1.arrays["weights"] == 0) > 0


@pytest.mark.parametrize("algo", ALGORITHMS)
def test_all_algorithms_fit_blobs(algo):
    X, y = _blobs(80, seed=3)
    params = {"n_estimators": 20} if algo == "random_forest" else {}
    if algo == "naive_bayes":
        params = {"variant": "gaussian"}
    model = train_classical(ClassicalSpec(algo, params), X, y, seed=0)
    labels, scores = predict_classical(model, X)
    assert scores.shape == (80, 4) and np.all(np.isfinite(scores))
    assert (labels == y).mean() >= 0.95
    if algo in ("logreg", "naive_bayes", "random_forest", "decision_tree", "knn"):
        assert np.all(scores >= 0) and np.all(scores <= 1)
        assert np.max(np.abs(scores.sum(axis=1) - 1)) <= 1e-9


@pytest.mark.parametrize("algo", ALGORITHMS)
def test_deterministic(algo):
    X, y = _blobs(40, seed=4)
    X = np.abs(X)
    spec = ClassicalSpec(algo, {"n_estimators": 5} if algo == "random_forest" else {})
    a = predict_scores(train_classical(spec, X, y, seed=9), X)
    b = predict_scores(train_classical(spec, X, y, seed=9), X)
    assert np.array_equal(a, b)


def test_argmax_ties_to_lowest_label():
    X = np.zeros((4, 1))
    y = np.array([0, 1, 2, 3])
    model = train_classical(ClassicalSpec("decision_tree"), X, y)
    labels, scores = predict_classical(model, np.zeros((1, 1)))
    assert np.allclose(scores, 0.25) and labels.tolist() == [0]


def test_majority_fallback():
    single = train_classical(ClassicalSpec("svm"), np.array([[1.0, 2.0]]), [2])
    assert predict_classical(single, np.zeros((3, 2)))[0].tolist() == [2, 2, 2]
    same = train_classical(ClassicalSpec("logreg"), np.ones((5, 2)), [1] * 5)
    assert predict_classical(same, np.ones((1, 2)))[0].tolist() == [1]


def test_errors():
    X, y = _blobs(8)
    model = train_classical(ClassicalSpec("knn", {"n_neighbors": 1}), X, y)
    with pytest.raises(ClassicalError, match="features"):
        predict_classical(model, np.zeros((1, 3)))
    with pytest.raises(ClassicalError):
        train_classical(ClassicalSpec("knn"), X, y[:-1])
    with pytest.raises(ClassicalError):
        train_classical(ClassicalSpec("knn"), X, [0, 1, 2, 3, 4, 0, 1, 2])


# --- trees ---------------------------------------------------------------------------------------

def test_split_examples():
    s = gini_best_split([[1], [2], [3], [4]], ["A", "A", "B", "B"])
    assert s.feature == 0 and s.threshold == 2.5 and abs(s.decrease - 0.5) <= 1e-15
    assert gini_best_split([[1], [2]], ["A", "A"]) is None
    assert gini_best_split([[1.0, 5.0], [1.0, 5.0]], ["A", "B"]) is None


def test_split_tie_rule_lowest_feature_then_threshold():
    # both features separate perfectly; feature 0 wins
    s = gini_best_split([[1, 1], [2, 2], [3, 3], [4, 4]], [0, 0, 1, 1])
    assert (s.feature, s.threshold) == (0, 2.5)
    # x=[1,2,3,4], y=[0,1,1,0]: thresholds 1.5 and 3.5 tie; lower threshold wins
    s = gini_best_split([[1], [2], [3], [4]], [0, 1, 1, 0])
    assert s.threshold == 1.5


_SMALL = st.integers(2, 8).flatmap(lambda n: st.tuples(
    st.lists(st.lists(st.integers(0, 3), min_size=1, max_size=4).map(tuple), min_size=n, max_size=n)
    .filter(lambda rows: len({len(r) for r in rows}) == 1),
    st.lists(st.integers(0, 3), min_size=n, max_size=n),
    st.integers(1, 2)))


@given(_SMALL)
def test_split_matches_oracle(case):
    rows, labels, min_leaf = case
    got = gini_best_split(np.array(rows, dtype=float), np.array(labels), min_leaf)
    ref = oracles.best_split([list(r) for r in rows], labels, min_leaf)
    if ref is None:
        assert got is None
    else:
        assert (got.feature, got.threshold) == (ref[0], float(ref[1]))
        assert abs(got.decrease - float(ref[2])) <= 1e-12


def test_tree_threshold_prediction():
    X = np.array([[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]])
    y = np.array([0, 0, 0, 2, 2, 2])
    model = train_classical(ClassicalSpec("decision_tree"), X, y)
    assert predict_classical(model, np.array([[10.0], [-3.0]]))[0].tolist() == [2, 0]


@pytest.mark.parametrize("max_depth", [1, 2, 3])
def test_tree_depth_respected(max_depth):
    X, y = _blobs(80, seed=5, sep=1.0)
    model = train_classical(ClassicalSpec("decision_tree", {"max_depth": max_depth}), X, y)
    assert tree_depth(model.arrays) <= max_depth
    forest = train_classical(ClassicalSpec("random_forest", {"max_depth": max_depth, "n_estimators": 4}), X, y)
    assert all(tree_depth(t) <= max_depth for t in forest_trees(forest))


def test_tree_min_samples_leaf_respected():
    X, y = _blobs(80, seed=6, sep=1.0)
    model = train_classical(ClassicalSpec("decision_tree", {"min_samples_leaf": 7}), X, y)
    from emoclass.classical import _tree_leaves
    leaves = _tree_leaves(model.arrays, X)
    assert np.bincount(leaves).max() > 0
    assert min(c for c in np.bincount(leaves) if c) >= 7


def test_forest_determinism_and_accuracy(synthetic_docs):
    from emoclass.textprep import preprocess_corpus
    docs = preprocess_corpus(synthetic_docs[:200])
    vocab = build_vocabulary(docs)
    X = bow_matrix(docs, vocab)
    y = np.array([int(d.label) for d in synthetic_docs[:200]])
    spec = ClassicalSpec("random_forest", {"n_estimators": 30})
    a = train_classical(spec, X, y, seed=5)
    b = train_classical(spec, X, y, seed=5)
    assert all(np.array_equal(a.arrays[k], b.arrays[k]) for k in a.arrays)
    tree = train_classical(ClassicalSpec("decision_tree", {"max_depth": 3}), X, y)
    forest_acc = (predict_classical(a, X)[0] == y).mean()
    assert forest_acc >= (predict_classical(tree, X)[0] == y).mean()
    assert a.info["max_features"] == int(np.sqrt(X.shape[1]))


# --- nearest neighbours -------------------------------------------------------------------------

def test_knn_examples():
    pts = np.array([[0.0, 0.0], [3.0, 4.0]])
    assert knn_neighbors(pts, np.array([0.0, 0.0]), 1, 2) == [(0, 0.0)]
    assert knn_neighbors(pts, np.array([0.0, 0.0]), 2, 2)[1] == (1, 5.0)
    pts = np.array([[0.0, 0.0], [2.0, 2.0]])
    assert knn_neighbors(pts, np.array([1.0, 1.0]), 2, 1) == [(0, 2.0), (1, 2.0)]
    with pytest.raises(ClassicalError):
        knn_neighbors(pts, np.array([1.0, 1.0]), 3, 1)


@given(st.integers(0, 10_000), st.integers(1, 8), st.sampled_from([1, 2]))
def test_knn_matches_brute_force(seed, k, p):
    rng = np.random.default_rng(seed)
    pts = rng.integers(0, 4, size=(8, 3)).astype(float)
    q = rng.integers(0, 4, size=3).astype(float)
    got = knn_neighbors(pts, q, k, p)
    ref = oracles.neighbors(pts.tolist(), q.tolist(), k, p)
    assert [i for i, _ in got] == [i for i, _ in ref]
    assert np.allclose([d for _, d in got], [d for _, d in ref], atol=1e-12, rtol=0)


def test_knn_query_on_training_point():
    X, y = _blobs(20, seed=7)
    model = train_classical(ClassicalSpec("knn", {"n_neighbors": 1}), X, y)
    labels, _ = predict_classical(model, X[[3, 11]])
    assert labels.tolist() == [y[3], y[11]]
    # zero-distance neighbours take all the weight
    k5 = train_classical(ClassicalSpec("knn", {"n_neighbors": 5}), X, y)
    assert predict_classical(k5, X[[3]])[1][0, y[3]] == 1.0


def test_knn_leaf_size_is_noop():
    X, y = _blobs(40, seed=8)
    a = train_classical(ClassicalSpec("knn", {"leaf_size": 1}), X, y)
    b = train_classical(ClassicalSpec("knn", {"leaf_size": 50}), X, y)
    assert np.array_equal(predict_scores(a, X), predict_scores(b, X))


# --- naive Bayes ----------------------------------------------------------------------------------

def test_nb_two_document_example():
    docs = [TokenizedDocument(["happy", "joy"]), TokenizedDocument(["sad", "cry"])]
    vocab = build_vocabulary(docs)
    X = bow_matrix(docs, vocab)
    y = [2, 3]
    model = train_classical(ClassicalSpec("naive_bayes", {"alpha": 1.0}), X, y)
    query = vectorize_bow(TokenizedDocument(["joy"]), vocab).dense()[None]
    labels, probs = predict_classical(model, query)
    assert labels.tolist() == [2]
    ref = oracles.multinomial_nb_posterior(X.tolist(), y, query[0].tolist(), 1)
    assert ref[2] > ref[3]
    assert np.allclose(probs[0], [float(v) for v in ref], atol=1e-12, rtol=0)


@given(st.integers(0, 10_000), st.sampled_from([Fraction(1), Fraction(1, 2)]))
def test_nb_matches_exact_posterior(seed, alpha):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 4, size=(8, 4)).astype(float)
    y = rng.integers(0, 4, size=8)
    if len(set(y.tolist())) < 2:
        y[0], y[1] = 0, 1
    q = rng.integers(0, 4, size=4).astype(float)
    model = train_classical(ClassicalSpec("naive_bayes", {"alpha": float(alpha)}), X, y)
    got = predict_scores(model, q[None])[0]
    ref = oracles.multinomial_nb_posterior(X.tolist(), y.tolist(), q.tolist(), alpha)
    assert np.max(np.abs(got - np.array([float(v) for v in ref]))) <= 1e-12


def test_nb_multinomial_rejects_negative_features():
    with pytest.raises(ClassicalError):
        train_classical(ClassicalSpec("naive_bayes"), np.array([[-1.0, 0.0], [1.0, 1.0]]), [0, 1])


# --- svm -------------------------------------------------------------------------------------------

@pytest.mark.parametrize("kernel", ["linear", "rbf", "poly", "sigmoid"])
def test_svm_kkt(kernel):
    X, y = _blobs(40, seed=9, sep=2.0)
    spec = ClassicalSpec("svm", {"kernel": kernel, "C": 1.0, "gamma": 0.1})
    model = train_classical(spec, X, y)
    assert all(model.info["converged"])
    K = kernel_matrix(X, X, kernel, 0.1)
    full = np.zeros((len(X), 4))
    sv = model.arrays["support_vectors"]
    for row, vec in zip(model.arrays["dual_coef"], sv):
        full[np.flatnonzero((X == vec).all(axis=1))[0]] = row
    for k in range(4):
        t = np.where(y == k, 1.0, -1.0)
        alpha = full[:, k] * t
        assert np.all(alpha >= -1e-12) and np.all(alpha <= 1.0 + 1e-12)
        assert abs(alpha @ t) <= 1e-8
        margin = t * (K @ full[:, k] - model.arrays["rho"][k])
        lo, hi = alpha <= 1e-12, alpha >= 1.0 - 1e-12
        assert np.all(margin[lo] >= 1 - 1e-3)
        assert np.all(margin[hi] <= 1 + 1e-3)
        assert np.all(np.abs(margin[~lo & ~hi] - 1) <= 1e-3)


def test_svm_absent_label_scores_minus_one():
    X, y = _blobs(40, seed=10)
    keep = y != 1
    model = train_classical(ClassicalSpec("svm"), X[keep], y[keep])
    _, scores = predict_classical(model, X)
    assert np.all(scores[:, 1] == -1.0)


def test_svm_gamma_resolution():
    X, y = _blobs(40, seed=11)
    model = train_classical(ClassicalSpec("svm", {"gamma": "scale"}), X, y)
    assert model.info["gamma"] == pytest.approx(1.0 / (X.shape[1] * X.var()))
    model = train_classical(ClassicalSpec("svm", {"gamma": "auto"}), X, y)
    assert model.info["gamma"] == pytest.approx(1.0 / X.shape[1])


def test_bow_vector_input():
    docs = [TokenizedDocument(t.split()) for t in ("a b", "c d", "a a", "d d")]
    vocab = build_vocabulary(docs)
    vecs = [vectorize_bow(d, vocab) for d in docs]
    model = train_classical(ClassicalSpec("logreg"), vecs, [0, 1, 0, 1])
    assert np.array_equal(predict_scores(model, vecs), predict_scores(model, bow_matrix(docs, vocab)))
