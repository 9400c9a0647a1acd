"""Rank and linear correlation between predicted scores and ground-truth MOS."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ConstantInputError", "plcc", "srcc", "average_ranks", "MetricReport", "compute_report"]


class ConstantInputError(ValueError):
    """Correlation is undefined when one argument has zero variance."""


def _validate(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1:
        raise ValueError("inputs must be 1-D score vectors")
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("need at least 2 samples")
    return x, y


def plcc(x, y) -> float:
    """Pearson product-moment correlation."""
    x, y = _validate(x, y)
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.sqrt((xc * xc).sum())
    sy = np.sqrt((yc * yc).sum())
    if sx == 0.0 or sy == 0.0:
        raise ConstantInputError("correlation undefined for constant input")
    return float((xc * yc).sum() / (sx * sy))


def average_ranks(x) -> np.ndarray:
    """Fractional ranks starting at 1; tied values share the mean of their ranks."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and x[order[j + 1]] == x[order[i]]:
            j += 1
        avg = 0.5 * (i + j) + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def srcc(x, y) -> float:
    """Spearman rank-order correlation: Pearson on average-tied ranks."""
    x, y = _validate(x, y)
    return plcc(average_ranks(x), average_ranks(y))


@dataclass
class MetricReport:
    srcc: float
    plcc: float
    n: int


def compute_report(pred, target) -> MetricReport:
    pred = np.asarray(pred, dtype=np.float64)
    return MetricReport(srcc=srcc(pred, target), plcc=plcc(pred, target), n=pred.size)
