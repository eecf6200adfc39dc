import csv
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from emoclass.metrics import (ConfusionMatrix, MetricsError, UndefinedCurveWarning, accuracy, classification_report,
                              confusion_matrix, export_curves, interpolate_curve, roc_ovr, roc_points,
                              trapezoid_auc)
from emoclass.optimize import TrainHistory
import oracles


def test_confusion_examples():
    cm = confusion_matrix([0, 1, 2, 3], [0, 1, 2, 3])
    assert np.array_equal(cm.counts, np.eye(4, dtype=int))
    cm = confusion_matrix([2], [0])
    assert cm.counts[2, 0] == 1 and cm.total == 1
    with pytest.raises(MetricsError):
        confusion_matrix([0, 1], [0])
    with pytest.raises(MetricsError):
        confusion_matrix([], [])
    with pytest.raises(MetricsError):
        confusion_matrix([4], [0])


def test_confusion_csv(tmp_path):
    cm = confusion_matrix([0, 1, 1], [0, 1, 3])
    cm.to_csv(tmp_path / "c.csv")
    rows = list(csv.reader((tmp_path / "c.csv").open()))
    assert rows[0] == ["true\\pred", "anger", "fear", "joy", "sadness"]
    assert rows[2] == ["fear", "0", "1", "0", "1"]


def test_report_examples():
    rep = classification_report(confusion_matrix([0, 1, 2, 3] * 2, [0, 1, 2, 3] * 2))
    assert np.all(rep.precision == 1) and np.all(rep.recall == 1) and np.all(rep.f1 == 1) and rep.accuracy == 1
    rep = classification_report(ConfusionMatrix(np.array([[5, 5], [0, 10]]), ("a", "b")))
    assert rep.precision[0] == 1.0 and rep.recall[0] == 0.5
    assert abs(rep.f1[0] - 2 / 3) <= 1e-15 and rep.accuracy == 0.75


def test_report_zero_label_convention():
    rep = classification_report(confusion_matrix([0, 1, 2], [0, 1, 2]))
    assert (rep.precision[3], rep.recall[3], rep.f1[3], rep.support[3]) == (0, 0, 0, 0)


_CM = st.lists(st.lists(st.integers(0, 30), min_size=4, max_size=4), min_size=4, max_size=4) \
    .filter(lambda m: sum(map(sum, m)) > 0)


@given(_CM)
def test_report_matches_exact_oracle(m):
    rep = classification_report(ConfusionMatrix(np.array(m)))
    per, acc = oracles.report_from_counts(m)
    for j, (p, r, f, sup) in enumerate(per):
        assert abs(rep.precision[j] - float(p)) <= 1e-12
        assert abs(rep.recall[j] - float(r)) <= 1e-12
        assert abs(rep.f1[j] - float(f)) <= 1e-12
        assert rep.support[j] == sup
    assert abs(rep.accuracy - float(acc)) <= 1e-12
    # weighted recall is the accuracy
    assert abs(rep.weighted["recall"] - rep.accuracy) <= 1e-12
    assert rep.support.sum() == np.array(m).sum()
    assert all(0 <= v <= 1 for v in np.concatenate([rep.precision, rep.recall, rep.f1]))


def test_report_render_and_dict():
    rep = classification_report(confusion_matrix([0, 1, 2, 3, 3], [0, 1, 2, 3, 2]))
    text = rep.render()
    assert "0.6667" in text and "weighted avg" in text and "sadness" in text
    d = rep.to_dict()
    assert d["per_label"]["sadness"]["support"] == 2 and d["accuracy"] == 0.8
    json.dumps(d)


def test_accuracy():
    assert accuracy([0, 1, 2], [0, 1, 1]) == pytest.approx(2 / 3)
    with pytest.raises(MetricsError):
        accuracy([], [])


# --- ROC ----------------------------------------------------------------------------------------

def _onehot(y):
    return np.eye(4)[y]


def test_roc_perfect_and_constant():
    y = np.array([0, 1, 2, 3] * 5)
    res = roc_ovr(y, _onehot(y))
    assert all(v == 1.0 for v in res.aucs().values())
    res = roc_ovr(y, np.full((20, 4), 0.25))
    assert all(c.auc == 0.5 for c in res.per_label.values())
    assert res.micro.auc == 0.5 and res.macro.auc == 0.5


def test_roc_random_near_chance():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 4, 10_000)
    res = roc_ovr(y, rng.random((10_000, 4)))
    assert all(abs(c.auc - 0.5) <= 0.05 for c in res.per_label.values())


@given(st.lists(st.tuples(st.integers(0, 6), st.booleans()), min_size=2, max_size=30)
       .filter(lambda r: 0 < sum(t for _, t in r) < len(r)))
def test_auc_equals_mann_whitney(rows):
    scores = [s / 6 for s, _ in rows]
    pos = [t for _, t in rows]
    fpr, tpr = roc_points(pos, scores)
    assert abs(trapezoid_auc(fpr, tpr) - float(oracles.mann_whitney_auc(scores, pos))) <= 1e-12
    ref = oracles.roc_by_thresholds(scores, pos)
    assert np.allclose(fpr, [a for a, _ in ref], atol=1e-15) and np.allclose(tpr, [b for _, b in ref], atol=1e-15)
    assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)
    assert (fpr[0], tpr[0], fpr[-1], tpr[-1]) == (0, 0, 1, 1)


def test_auc_invariant_under_monotone_transforms():
    rng = np.random.default_rng(1)
    y = rng.integers(0, 4, 300)
    S = rng.random((300, 4)) + 0.3 * _onehot(y)
    base = roc_ovr(y, S)
    for transformed in (np.exp(S), 3.0 * S - 7.0):
        other = roc_ovr(y, transformed)
        for name in base.per_label:
            assert other.per_label[name].auc == base.per_label[name].auc


def test_undefined_label():
    y = np.array([0, 1, 2, 0, 1, 2])
    with pytest.warns(UndefinedCurveWarning):
        res = roc_ovr(y, _onehot(y))
    assert res.undefined == ["sadness"] and not res.per_label["sadness"].defined
    assert res.aucs()["sadness"] is None and res.macro.auc == 1.0


def test_roc_shape_errors():
    with pytest.raises(MetricsError):
        roc_ovr([0, 1], np.zeros((2, 3)))
    with pytest.raises(MetricsError):
        roc_ovr([0, 1], np.array([[0, 0, 0, np.nan], [0, 0, 0, 0]]))


def test_macro_grid_interpolation():
    fpr, tpr = np.array([0.0, 0.0, 0.5, 1.0]), np.array([0.0, 0.5, 1.0, 1.0])
    grid = np.array([0.0, 0.25, 0.5, 1.0])
    assert interpolate_curve(fpr, tpr, grid).tolist() == [0.5, 0.75, 1.0, 1.0]
    y = np.array([0, 1, 2, 3] * 10)
    res = roc_ovr(y, np.random.default_rng(2).random((40, 4)))
    assert len(res.macro.fpr) == 102 and res.macro.fpr[0] == 0 and res.macro.fpr[-1] == 1
    assert 0 <= res.macro.auc <= 1


# --- export ------------------------------------------------------------------------------------------

def _history(n):
    h = TrainHistory()
    for e in range(n):
        h.train_loss.append(1.0 / (e + 1))
        h.train_accuracy.append(0.5)
        h.validation_loss.append(1.1 / (e + 1))
        h.validation_accuracy.append(0.4)
    return h


def test_export_learning_curves(tmp_path):
    export_curves(_history(35), path=tmp_path)
    rows = list(csv.reader((tmp_path / "learning_curves.csv").open()))
    assert rows[0] == ["epoch", "train_loss", "train_accuracy", "validation_loss", "validation_accuracy"]
    assert len(rows) == 36 and all(len(r) == 5 for r in rows)
    assert rows[-1][0] == "35"


def test_export_roc_files(tmp_path):
    y = np.array([0, 1, 2, 3] * 5)
    written = export_curves(curves=roc_ovr(y, _onehot(y)), path=tmp_path, svg=True)
    names = {p.name for p in written}
    for label in ("anger", "fear", "joy", "sadness", "micro", "macro"):
        assert f"roc_{label}.csv" in names
    assert "roc.svg" in names
    assert json.loads((tmp_path / "roc_auc.json").read_text())["micro"] == 1.0
    assert (tmp_path / "roc.svg").read_text().startswith("<svg")


def test_export_svg_learning_curves(tmp_path):
    written = export_curves(_history(3), path=tmp_path, svg=True)
    assert {"accuracy_curve.svg", "loss_curve.svg"} <= {p.name for p in written}


def test_export_errors(tmp_path):
    with pytest.raises(MetricsError):
        export_curves(TrainHistory(), path=tmp_path)
    with pytest.raises(MetricsError):
        export_curves(path=tmp_path)
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(MetricsError):
        export_curves(_history(2), path=blocker / "sub")


def test_fraction_oracle_sanity():
    # the hand computation for the 2-label example
    per, acc = oracles.report_from_counts([[5, 5], [0, 10]])
    assert per[0][:3] == (Fraction(1), Fraction(1, 2), Fraction(2, 3)) and acc == Fraction(3, 4)
