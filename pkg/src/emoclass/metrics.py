"""Accuracy, per-label precision/recall/F1, confusion matrix, one-vs-rest ROC, curve export."""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .corpus import LABEL_NAMES, N_LABELS

MACRO_GRID = np.linspace(0.0, 1.0, 101)


class MetricsError(ValueError):
    pass


class UndefinedCurveWarning(UserWarning):
    pass


@dataclass
class ConfusionMatrix:
    counts: np.ndarray
    labels: tuple = LABEL_NAMES

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["true\\pred", *self.labels])
            for name, row in zip(self.labels, self.counts):
                w.writerow([name, *(int(v) for v in row)])


def confusion_matrix(y_true, y_pred, n_labels: int = N_LABELS) -> ConfusionMatrix:
    y_true = np.asarray([int(v) for v in y_true], dtype=np.int64)
    y_pred = np.asarray([int(v) for v in y_pred], dtype=np.int64)
    if len(y_true) != len(y_pred):
        raise MetricsError(f"{len(y_true)} true labels but {len(y_pred)} predictions")
    if len(y_true) == 0:
        raise MetricsError("no samples")
    for arr in (y_true, y_pred):
        if arr.min() < 0 or arr.max() >= n_labels:
            raise MetricsError(f"labels must be in [0, {n_labels})")
    counts = np.zeros((n_labels, n_labels), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    labels = LABEL_NAMES if n_labels == N_LABELS else tuple(str(i) for i in range(n_labels))
    return ConfusionMatrix(counts, labels)


@dataclass
class ClassificationReport:
    labels: tuple
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    accuracy: float

    @property
    def macro(self) -> dict:
        return {"precision": float(self.precision.mean()), "recall": float(self.recall.mean()),
                "f1": float(self.f1.mean()), "support": int(self.support.sum())}

    @property
    def weighted(self) -> dict:
        w = self.support / self.support.sum()
        return {"precision": float(w @ self.precision), "recall": float(w @ self.recall),
                "f1": float(w @ self.f1), "support": int(self.support.sum())}

    def to_dict(self) -> dict:
        per = {name: {"precision": float(self.precision[i]), "recall": float(self.recall[i]),
                      "f1": float(self.f1[i]), "support": int(self.support[i])}
               for i, name in enumerate(self.labels)}
        return {"per_label": per, "accuracy": self.accuracy, "macro_avg": self.macro,
                "weighted_avg": self.weighted}

    def render(self) -> str:
        lines = [f"{'':>14}{'precision':>10}{'recall':>10}{'f1-score':>10}{'support':>10}", ""]
        for i, name in enumerate(self.labels):
            lines.append(f"{name:>14}{self.precision[i]:>10.4f}{self.recall[i]:>10.4f}"
                         f"{self.f1[i]:>10.4f}{int(self.support[i]):>10d}")
        total = int(self.support.sum())
        lines += ["", f"{'accuracy':>14}{'':>10}{'':>10}{self.accuracy:>10.4f}{total:>10d}"]
        for title, avg in (("macro avg", self.macro), ("weighted avg", self.weighted)):
            lines.append(f"{title:>14}{avg['precision']:>10.4f}{avg['recall']:>10.4f}"
                         f"{avg['f1']:>10.4f}{total:>10d}")
        return "\n".join(lines)


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(len(num))
    nz = den > 0
    out[nz] = num[nz] / den[nz]
    return out


def classification_report(cm: ConfusionMatrix) -> ClassificationReport:
    c = np.asarray(cm.counts, dtype=np.float64)
    if c.sum() < 1:
        raise MetricsError("confusion matrix is empty")
    tp = np.diag(c)
    precision = _safe_div(tp, c.sum(axis=0))
    recall = _safe_div(tp, c.sum(axis=1))
    f1 = _safe_div(2 * precision * recall, precision + recall)
    return ClassificationReport(tuple(cm.labels), precision, recall, f1,
                                c.sum(axis=1).astype(np.int64), float(tp.sum() / c.sum()))


def accuracy(y_true, y_pred) -> float:
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if len(y_true) != len(y_pred) or len(y_true) == 0:
        raise MetricsError("accuracy needs equal, non-zero lengths")
    return float(np.mean(y_true == y_pred))


# --- ROC ---------------------------------------------------------------------------

@dataclass
class RocCurve:
    name: str
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    defined: bool = True


@dataclass
class RocSet:
    per_label: dict
    micro: RocCurve
    macro: RocCurve
    undefined: list = field(default_factory=list)

    def aucs(self) -> dict:
        out = {name: (c.auc if c.defined else None) for name, c in self.per_label.items()}
        out["micro"] = self.micro.auc
        out["macro"] = self.macro.auc if self.macro.defined else None
        return out


def roc_points(y_bin, scores) -> tuple[np.ndarray, np.ndarray]:
    """(fpr, tpr) from sweeping a threshold down through the distinct scores."""
    y_bin = np.asarray(y_bin, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    P, N = int(y_bin.sum()), int((~y_bin).sum())
    order = np.argsort(-scores, kind="stable")
    s, yb = scores[order], y_bin[order]
    last = np.r_[np.flatnonzero(s[1:] != s[:-1]), len(s) - 1]
    tp = np.cumsum(yb)[last]
    fp = np.cumsum(~yb)[last]
    fpr = np.r_[0.0, fp / N]
    tpr = np.r_[0.0, tp / P]
    return fpr, tpr


def trapezoid_auc(fpr, tpr) -> float:
    fpr, tpr = np.asarray(fpr), np.asarray(tpr)
    return float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))


def interpolate_curve(fpr, tpr, grid=MACRO_GRID) -> np.ndarray:
    """TPR of a step curve at each grid fpr, taking the upper value on vertical segments."""
    xs, first = np.unique(fpr, return_index=True)
    last = np.r_[first[1:] - 1, len(fpr) - 1]
    hi, lo = tpr[last], tpr[first]
    out = np.empty(len(grid))
    for g_i, g in enumerate(grid):
        k = int(np.searchsorted(xs, g, side="right")) - 1
        if xs[k] == g or k == len(xs) - 1:
            out[g_i] = hi[k]
        else:
            w = (g - xs[k]) / (xs[k + 1] - xs[k])
            out[g_i] = hi[k] + w * (lo[k + 1] - hi[k])
    return out


def roc_ovr(y_true, scores, labels=LABEL_NAMES) -> RocSet:
    """One-vs-rest ROC per label plus micro- and macro-averaged curves.

    A label with no positives or no negatives is marked undefined and left out
    of the macro average (with a warning).
    """
    y = np.asarray([int(v) for v in y_true], dtype=np.int64)
    S = np.asarray(scores, dtype=np.float64)
    if S.ndim != 2 or S.shape != (len(y), len(labels)):
        raise MetricsError(f"scores must have shape ({len(y)}, {len(labels)}), got {S.shape}")
    if not np.all(np.isfinite(S)):
        raise MetricsError("scores contain non-finite values")
    if len(y) == 0:
        raise MetricsError("no samples")
    Y = y[:, None] == np.arange(len(labels))[None, :]
    per, undefined, grid_tprs = {}, [], []
    for j, name in enumerate(labels):
        pos = int(Y[:, j].sum())
        if pos == 0 or pos == len(y):
            undefined.append(name)
            per[name] = RocCurve(name, np.array([0.0, 1.0]), np.array([0.0, 1.0]), float("nan"), False)
            continue
        fpr, tpr = roc_points(Y[:, j], S[:, j])
        per[name] = RocCurve(name, fpr, tpr, trapezoid_auc(fpr, tpr))
        grid_tprs.append(interpolate_curve(fpr, tpr))
    if undefined:
        warnings.warn(f"ROC undefined for {', '.join(undefined)} (no positives or no negatives); "
                      "excluded from the macro average", UndefinedCurveWarning, stacklevel=2)
    fpr, tpr = roc_points(Y.ravel(), S.ravel())
    micro = RocCurve("micro", fpr, tpr, trapezoid_auc(fpr, tpr))
    if grid_tprs:
        mfpr = np.r_[0.0, MACRO_GRID]
        mtpr = np.r_[0.0, np.mean(grid_tprs, axis=0)]
        macro = RocCurve("macro", mfpr, mtpr, trapezoid_auc(mfpr, mtpr))
    else:
        macro = RocCurve("macro", np.array([0.0, 1.0]), np.array([0.0, 1.0]), float("nan"), False)
    return RocSet(per, micro, macro, undefined)


# --- export ------------------------------------------------------------------------

HISTORY_COLUMNS = ("train_loss", "train_accuracy", "validation_loss", "validation_accuracy")


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def export_curves(history=None, curves: RocSet | None = None, path=".", svg: bool = False) -> list[Path]:
    """Write ``learning_curves.csv`` and/or ``roc_<name>.csv`` files (plus SVG charts if asked)."""
    out = Path(path)
    if history is None and curves is None:
        raise MetricsError("nothing to export")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise MetricsError(f"cannot create {out}: {exc.strerror}") from None
    written = []
    try:
        if history is not None:
            cols = [list(getattr(history, c)) for c in HISTORY_COLUMNS]
            if not cols[0]:
                raise MetricsError("training history is empty")
            p = out / "learning_curves.csv"
            _write_rows(p, ("epoch",) + HISTORY_COLUMNS,
                        [[e + 1, *(repr(float(c[e])) for c in cols)] for e in range(len(cols[0]))])
            written.append(p)
            if svg:
                epochs = np.arange(1, len(cols[0]) + 1)
                for kind in ("accuracy", "loss"):
                    series = {f"{split} {kind}": (epochs, np.array(getattr(history, f"{split}_{kind}")))
                              for split in ("train", "validation")}
                    p = out / f"{kind}_curve.svg"
                    p.write_text(svg_line_chart(series, f"{kind} per epoch", "epoch", kind), encoding="utf-8")
                    written.append(p)
        if curves is not None:
            all_curves = list(curves.per_label.values()) + [curves.micro, curves.macro]
            for c in all_curves:
                p = out / f"roc_{c.name}.csv"
                rows = [[repr(float(a)), repr(float(b))] for a, b in zip(c.fpr, c.tpr)] if c.defined else []
                _write_rows(p, ("fpr", "tpr"), rows)
                written.append(p)
            (out / "roc_auc.json").write_text(json.dumps(curves.aucs(), indent=2), encoding="utf-8")
            written.append(out / "roc_auc.json")
            if svg:
                series = {f"{c.name} (auc {c.auc:.4f})": (c.fpr, c.tpr) for c in all_curves if c.defined}
                p = out / "roc.svg"
                p.write_text(svg_line_chart(series, "ROC (one-vs-rest)", "false positive rate",
                                            "true positive rate", xlim=(0, 1), ylim=(0, 1)), encoding="utf-8")
                written.append(p)
    except OSError as exc:
        raise MetricsError(f"cannot write to {out}: {exc.strerror}") from None
    return written


_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2")


def svg_line_chart(series: dict, title: str, xlabel: str, ylabel: str,
                   xlim=None, ylim=None, width: int = 640, height: int = 420) -> str:
    """Minimal standalone SVG: axes with ticks, one polyline per series, legend."""
    left, right, top, bottom = 60, 170, 30, 50
    pw, ph = width - left - right, height - top - bottom
    xs = np.concatenate([np.asarray(x, float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, float) for _, y in series.values()])
    x0, x1 = xlim or (float(xs.min()), float(xs.max()))
    y0, y1 = ylim or (float(ys.min()), float(ys.max()))
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + ph - (y - y0) / (y1 - y0) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="11">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{left + pw / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
             f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
             f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>']
    for t in np.linspace(0, 1, 6):
        xv, yv = x0 + t * (x1 - x0), y0 + t * (y1 - y0)
        parts.append(f'<text x="{px(xv):.1f}" y="{top + ph + 15}" text-anchor="middle">{xv:.3g}</text>')
        parts.append(f'<text x="{left - 5}" y="{py(yv) + 4:.1f}" text-anchor="end">{yv:.3g}</text>')
    parts.append(f'<text x="{left + pw / 2}" y="{height - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    parts.append(f'<text x="15" y="{top + ph / 2}" text-anchor="middle" '
                 f'transform="rotate(-90 15 {top + ph / 2})">{escape(ylabel)}</text>')
    for i, (name, (x, y)) in enumerate(series.items()):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 10 + 16 * i
        parts.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 30}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{left + pw + 35}" y="{ly + 4}">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
