"""Confusion matrices, ROC curves, AUC and the AUC quality bands."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, SingleClass

BANDS = ("poor", "below-acceptable", "acceptable", "excellent", "outstanding")


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise LengthMismatch(f"scores and labels differ in shape: {s.shape} vs {y.shape}")
    if len(s) == 0:
        raise LengthMismatch("no rows to evaluate")
    if np.isnan(s).any():
        raise ValueError("scores contain NaN")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return s, y.astype(np.int64)


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int
    threshold: float

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total

    @property
    def hit_rate(self) -> float:
        """True positive rate; NaN when there are no events."""
        pos = self.tp + self.fn
        return self.tp / pos if pos else math.nan

    @property
    def specificity(self) -> float:
        """True negative rate; NaN when there are no non-events."""
        neg = self.tn + self.fp
        return self.tn / neg if neg else math.nan

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn, "threshold": self.threshold}


def confusion(scores, labels, threshold: float = 0.5) -> ConfusionMatrix:
    """Tally predictions; a score equal to the threshold counts as an event."""
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must be in [0, 1]")
    s, y = _check(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    tn = int(np.sum(~pred & (y == 0)))
    return ConfusionMatrix(tp, fp, tn, fn, float(threshold))


@dataclass(frozen=True)
class RocCurve:
    """Cumulative counts at each distinct score, highest score first.

    ``fpr[0] == tpr[0] == 0`` (threshold above every score) and the last
    point is ``(1, 1)``.
    """

    thresholds: np.ndarray
    fp: np.ndarray
    tp: np.ndarray
    n_neg: int
    n_pos: int

    @property
    def fpr(self) -> np.ndarray:
        return self.fp / self.n_neg

    @property
    def tpr(self) -> np.ndarray:
        return self.tp / self.n_pos

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def area(self) -> float:
        """Trapezoid area, accumulated in integer counts and divided once."""
        dfp = np.diff(self.fp)
        twice = int(np.sum(dfp * (self.tp[1:] + self.tp[:-1])))
        return twice / (2 * self.n_pos * self.n_neg)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("threshold,fpr,tpr\n")
        for t, f, p in zip(self.thresholds.tolist(), self.fpr.tolist(), self.tpr.tolist()):
            out.write(f"{t!r},{f!r},{p!r}\n")
        return out.getvalue()


def roc_curve(scores, labels) -> RocCurve:
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("ROC needs both classes present")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(s[1:] != s[:-1]), len(s) - 1]  # end of each tie group
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    return RocCurve(
        thresholds=np.r_[np.inf, s[last]],
        fp=np.r_[0, fp].astype(np.int64),
        tp=np.r_[0, tp].astype(np.int64),
        n_neg=n_neg,
        n_pos=n_pos,
    )


def auc(scores, labels) -> float:
    """Area under the ROC curve; equals the Mann-Whitney pair statistic with ties at 1/2."""
    return roc_curve(scores, labels).area()


def auc_band(value: float) -> str:
    """Rule-of-thumb quality label for an AUC."""
    if not 0 <= value <= 1:
        raise ValueError(f"AUC must be in [0, 1], got {value}")
    if value < 0.5:
        return "poor"
    if value < 0.7:
        return "below-acceptable"
    if value < 0.8:
        return "acceptable"
    if value < 0.9:
        return "excellent"
    return "outstanding"


def _num(x: float):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def _pct(x: float) -> str:
    return "n/a" if x is None or math.isnan(x) else f"{100 * x:.1f}%"


@dataclass(frozen=True)
class EvaluationReport:
    confusion: ConfusionMatrix
    roc: RocCurve
    auc: float

    @property
    def accuracy(self) -> float:
        return self.confusion.accuracy

    @property
    def hit_rate(self) -> float:
        return self.confusion.hit_rate

    @property
    def specificity(self) -> float:
        return self.confusion.specificity

    @property
    def auc_band(self) -> str:
        return auc_band(self.auc)

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "auc_band": self.auc_band,
            "accuracy": self.accuracy,
            "hit_rate": _num(self.hit_rate),
            "specificity": _num(self.specificity),
            "confusion": self.confusion.to_dict(),
            "display": {
                "auc": f"{self.auc:.2f}",
                "accuracy": _pct(self.accuracy),
                "hit_rate": _pct(self.hit_rate),
                "specificity": _pct(self.specificity),
            },
            "n_rows": self.confusion.total,
        }


def evaluate(scores, labels, threshold: float = 0.5) -> EvaluationReport:
    roc = roc_curve(scores, labels)
    return EvaluationReport(confusion(scores, labels, threshold), roc, roc.area())


ROW_LABELS = (
    ("AUC", lambda d: d["display"]["auc"]),
    ("Accuracy Rate (%)", lambda d: d["display"]["accuracy"]),
    ("Hit Rate (%) [True Positive Rate]", lambda d: d["display"]["hit_rate"]),
    ("Specificity Rate (%) [True Negative Rate]", lambda d: d["display"]["specificity"]),
    ("AUC band", lambda d: d["auc_band"]),
)


def comparison_table(title: str, columns: list[tuple[str, dict | None, str | None]]) -> str:
    """Models side by side, one metric per row.

    ``columns`` holds ``(name, report_dict, failure)``; a failed candidate
    has ``report_dict=None`` and its failure text is shown instead.
    """
    width = max(len(lbl) for lbl, _ in ROW_LABELS) + 2
    colw = max([16] + [len(name) + 2 for name, _, _ in columns])
    lines = [title, "=" * len(title), " " * width + "".join(f"{name:>{colw}}" for name, _, _ in columns)]
    for label, get in ROW_LABELS:
        cells = []
        for _, rep, _fail in columns:
            cells.append(f"{get(rep) if rep else 'FAILED':>{colw}}")
        lines.append(f"{label:<{width}}" + "".join(cells))
    failed = [(name, fail) for name, rep, fail in columns if rep is None]
    for name, fail in failed:
        lines.append(f"  {name} failed: {fail}")
    return "\n".join(lines) + "\n"
