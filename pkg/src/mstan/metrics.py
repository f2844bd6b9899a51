"""Confusion-matrix metrics for binary risk predictions.

Any 0/0 ratio (e.g. precision with no positive predictions) is reported as 0
rather than NaN, so sweeps and CSV rows are always fully numeric. A score equal
to the threshold counts as a positive prediction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

CSV_FIELDS = ["accuracy", "precision", "recall", "f1"]


@dataclass(frozen=True)
class MetricsReport:
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    threshold: float = 0.5

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def csv_row(self) -> List[float]:
        return [self.accuracy, self.precision, self.recall, self.f1]

    def __str__(self) -> str:
        return (f"n={self.n} tp={self.tp} fp={self.fp} tn={self.tn} fn={self.fn} "
                f"acc={self.accuracy:.4f} precision={self.precision:.4f} "
                f"recall={self.recall:.4f} f1={self.f1:.4f} (threshold {self.threshold:g})")


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def from_counts(tp: int, fp: int, tn: int, fn: int, threshold: float = 0.5) -> MetricsReport:
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = _ratio(2 * tp, 2 * tp + fp + fn)
    return MetricsReport(tp, fp, tn, fn, _ratio(tp + tn, tp + fp + tn + fn),
                         precision, recall, f1, threshold)


def evaluate(y_hat: Sequence[float], y: Sequence[int], threshold: float = 0.5) -> MetricsReport:
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y)
    if y_hat.shape != y.shape or y_hat.ndim != 1:
        raise ValueError(f"length mismatch: {y_hat.shape} predictions vs {y.shape} labels")
    if y_hat.size == 0:
        raise ValueError("cannot evaluate an empty prediction set")
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    pred = y_hat >= threshold
    pos = y == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    tn = int(np.sum(~pred & ~pos))
    return from_counts(tp, fp, tn, fn, float(threshold))


def threshold_sweep(y_hat, y, grid: Sequence[float]) -> List[MetricsReport]:
    if len(grid) == 0:
        raise ValueError("threshold grid is empty")
    return [evaluate(y_hat, y, thr) for thr in grid]
