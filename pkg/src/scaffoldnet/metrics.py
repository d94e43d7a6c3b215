"""Accuracy, MAE, one-vs-rest ROC curves with micro/macro averaging, and reports."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .errors import DegenerateInputError, InputError
from .layers import NUM_CLASSES

CURVE_IDS = ("class_0", "class_1", "class_2", "micro", "macro")


def accuracy(pred_labels, true_labels):
    """Fraction of positions where the predicted label equals the true one."""
    pred = np.asarray(pred_labels)
    true = np.asarray(true_labels)
    if pred.shape != true.shape or pred.size == 0:
        raise InputError(f"label vectors must be non-empty and equal length, got {pred.shape}, {true.shape}")
    return float(np.mean(pred == true))


def mae(probs, onehot):
    """Mean absolute difference over every entry of the N x K probability matrix."""
    probs = np.asarray(probs, dtype=np.float64)
    onehot = np.asarray(onehot, dtype=np.float64)
    if probs.shape != onehot.shape or probs.size == 0:
        raise InputError(f"shape mismatch: {probs.shape} vs {onehot.shape}")
    return float(np.mean(np.abs(probs - onehot)))


def confusion_matrix(pred_labels, true_labels, num_classes=NUM_CLASSES):
    """Rows are true classes, columns predicted classes."""
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(true_labels), np.asarray(pred_labels)), 1)
    return cm


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float = float("nan")

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist(), self.thresholds.tolist()))


def auc(curve):
    """Trapezoidal area under ``tpr`` as a function of ``fpr``."""
    x = np.asarray(curve.fpr, dtype=np.float64)
    y = np.asarray(curve.tpr, dtype=np.float64)
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))


def roc_binary(scores, labels):
    """ROC curve sweeping the threshold over the distinct scores, highest first.

    Tied scores form a single point. The curve starts at (0, 0) with threshold
    +inf and ends at (1, 1).
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise InputError(f"{scores.size} scores but {labels.size} labels")
    positive = labels.astype(bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateInputError("ROC needs at least one positive and one negative label")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    p = positive[order]
    # last index of each run of equal scores
    ends = np.r_[np.flatnonzero(s[1:] != s[:-1]), s.size - 1]
    tp = np.cumsum(p)[ends]
    fp = (ends + 1) - tp
    curve = RocCurve(
        fpr=np.r_[0.0, fp / n_neg],
        tpr=np.r_[0.0, tp / n_pos],
        thresholds=np.r_[np.inf, s[ends]],
    )
    curve.auc = auc(curve)
    return curve


def _one_sided(curve, grid):
    """TPR of a piecewise-linear ROC curve at ``grid``, from the left and from the right.

    At a vertical jump the left limit is the lowest TPR at that FPR and the
    right limit the highest.
    """
    x = curve.fpr
    y = curve.tpr
    first = np.r_[True, x[1:] != x[:-1]]
    last = np.r_[x[1:] != x[:-1], True]
    ux, lo, hi = x[first], y[first], y[last]
    k = np.clip(np.searchsorted(ux, grid, side="right") - 1, 0, ux.size - 1)
    exact = ux[k] == grid
    # strictly between ux[k] and ux[k+1] the curve runs from the top of one
    # jump to the bottom of the next
    k1 = np.minimum(k + 1, ux.size - 1)
    span = np.where(exact, 1.0, ux[k1] - ux[k])
    between = hi[k] + (grid - ux[k]) / span * (lo[k1] - hi[k])
    return np.where(exact, lo[k], between), np.where(exact, hi[k], between)


def macro_average(curves):
    """Average several ROC curves vertically on the union of their FPR grids."""
    grid = np.unique(np.concatenate([c.fpr for c in curves]))
    lefts, rights = zip(*(_one_sided(c, grid) for c in curves))
    left = np.mean(lefts, axis=0)
    right = np.mean(rights, axis=0)
    fpr = np.repeat(grid, 2)
    tpr = np.column_stack([left, right]).ravel()
    keep = np.r_[True, (np.diff(fpr) != 0) | (np.diff(tpr) != 0)]
    curve = RocCurve(fpr[keep], tpr[keep], np.full(int(keep.sum()), np.nan))
    curve.auc = auc(curve)
    return curve


@dataclass
class RocSet:
    per_class: list  # RocCurve, or None where the class is absent/ubiquitous
    micro: RocCurve
    macro: RocCurve | None

    def curves(self):
        out = {f"class_{c}": curve for c, curve in enumerate(self.per_class) if curve is not None}
        out["micro"] = self.micro
        if self.macro is not None:
            out["macro"] = self.macro
        return out


def multiclass_roc(probs, onehot):
    """One-vs-rest curves per class, plus micro- and macro-averaged curves."""
    probs = np.asarray(probs, dtype=np.float64)
    onehot = np.asarray(onehot)
    if probs.ndim != 2 or probs.shape != onehot.shape or probs.shape[0] < 1:
        raise InputError(f"expected matching N x K arrays, got {probs.shape}, {onehot.shape}")
    per_class = []
    for c in range(probs.shape[1]):
        try:
            per_class.append(roc_binary(probs[:, c], onehot[:, c]))
        except DegenerateInputError:
            per_class.append(None)
    micro = roc_binary(probs.ravel(), onehot.ravel())
    valid = [c for c in per_class if c is not None]
    macro = macro_average(valid) if valid else None
    return RocSet(per_class, micro, macro)


@dataclass
class EvalReport:
    accuracy: float
    cross_entropy: float
    mae: float
    per_class_auc: list
    micro_auc: float
    macro_auc: float
    confusion: np.ndarray = field(repr=False)

    def summary(self):
        rows = {
            "accuracy": self.accuracy,
            "cross_entropy": self.cross_entropy,
            "mae": self.mae,
        }
        for c, a in enumerate(self.per_class_auc):
            rows[f"auc_class_{c}"] = float("nan") if a is None else a
        rows["micro_auc"] = self.micro_auc
        rows["macro_auc"] = self.macro_auc
        return rows


def evaluate_predictions(probs, labels):
    """Build the full report and ROC set from class probabilities and true labels."""
    from .training import cross_entropy, one_hot

    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    onehot = one_hot(labels, probs.shape[1])
    pred = np.argmax(probs, axis=1)
    rocs = multiclass_roc(probs, onehot)
    report = EvalReport(
        accuracy=accuracy(pred, labels),
        cross_entropy=cross_entropy(probs, onehot),
        mae=mae(probs, onehot),
        per_class_auc=[None if c is None else c.auc for c in rocs.per_class],
        micro_auc=rocs.micro.auc,
        macro_auc=float("nan") if rocs.macro is None else rocs.macro.auc,
        confusion=confusion_matrix(pred, labels, probs.shape[1]),
    )
    return report, rocs


# ---------------------------------------------------------------------------
# Report files
# ---------------------------------------------------------------------------

def write_roc_csv(report: EvalReport, rocs: RocSet, path):
    """ROC points as ``curve_id,fpr,tpr,threshold`` rows, then a blank line and a summary block."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["curve_id", "fpr", "tpr", "threshold"])
        for cid, curve in rocs.curves().items():
            for f, t, th in curve.points:
                w.writerow([cid, repr(f), repr(t), repr(th)])
        w.writerow([])
        w.writerow(["metric", "value"])
        for k, v in report.summary().items():
            w.writerow([k, repr(float(v))])


def read_roc_csv(path):
    """Parse a file written by :func:`write_roc_csv` into ``(curves, summary)``."""
    curves = {}
    summary = {}
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["curve_id", "fpr", "tpr", "threshold"]:
        raise InputError(f"{path}: missing ROC CSV header")
    i = 1
    while i < len(rows) and rows[i]:
        cid, f, t, th = rows[i]
        curves.setdefault(cid, []).append((float(f), float(t), float(th)))
        i += 1
    for row in rows[i + 2:]:
        if row:
            summary[row[0]] = float(row[1])
    out = {}
    for cid, pts in curves.items():
        arr = np.array(pts, dtype=np.float64)
        c = RocCurve(arr[:, 0], arr[:, 1], arr[:, 2])
        c.auc = auc(c)
        out[cid] = c
    return out, summary


_COLOURS = {
    "class_0": "#1f77b4",
    "class_1": "#ff7f0e",
    "class_2": "#2ca02c",
    "micro": "#d62728",
    "macro": "#9467bd",
}


def write_roc_svg(rocs: RocSet, path, class_names=None):
    """Self-contained 800x600 SVG of every curve, the chance diagonal and an AUC legend."""
    w, h = 800, 600
    left, top, right, bottom = 70, 30, 560, 540
    pw, ph = right - left, bottom - top

    def xy(f, t):
        return f"{left + f * pw:.2f},{bottom - t * ph:.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w} {h}" width="{w}" height="{h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{top}" stroke="gray" stroke-dasharray="6,4"/>',
        f'<text x="{left + pw / 2}" y="{h - 20}" text-anchor="middle" font-size="16">False positive rate</text>',
        f'<text x="20" y="{top + ph / 2}" text-anchor="middle" font-size="16" '
        f'transform="rotate(-90 20 {top + ph / 2})">True positive rate</text>',
    ]
    for v in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(f'<text x="{left + v * pw}" y="{bottom + 18}" text-anchor="middle" font-size="12">{v:g}</text>')
        parts.append(f'<text x="{left - 8}" y="{bottom - v * ph + 4}" text-anchor="end" font-size="12">{v:g}</text>')
    legend_y = top + 20
    for cid, curve in rocs.curves().items():
        colour = _COLOURS.get(cid, "black")
        pts = " ".join(xy(f, t) for f, t in zip(curve.fpr, curve.tpr))
        dash = ' stroke-dasharray="3,3"' if cid in ("micro", "macro") else ""
        parts.append(f'<polyline id="{cid}" points="{pts}" fill="none" stroke="{colour}" stroke-width="2"{dash}/>')
        label = cid
        if class_names and cid.startswith("class_"):
            label = f"{cid} ({class_names[int(cid[-1])]})"
        parts.append(
            f'<text x="{right + 15}" y="{legend_y}" font-size="13" fill="{colour}">'
            f"{escape(label)}: AUC = {curve.auc:.4f}</text>"
        )
        legend_y += 22
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def emit_report(report: EvalReport, rocs: RocSet, csv_path, svg_path, class_names=None):
    write_roc_csv(report, rocs, csv_path)
    write_roc_svg(rocs, svg_path, class_names)


def format_report(report: EvalReport):
    """``name,value`` lines for stdout."""
    return [f"{k},{'nan' if math.isnan(v) else f'{v:.6f}'}" for k, v in report.summary().items()]
