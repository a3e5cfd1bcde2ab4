"""Agreement metrics between predicted and human scores.

Correlations raise :class:`ConstantInputError` when either side has zero
variance instead of returning a sentinel.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

MEAN_BIN_EDGES = np.linspace(1.0, 5.0, 17)
STD_BIN_EDGES = np.linspace(0.0, 2.0, 9)


class ConstantInputError(ValueError):
    """Correlation is undefined for a constant sequence."""


def _pair(x, y):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("need at least two points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("inputs must be finite")
    return x, y


def pearson_lcc(x, y) -> float:
    """Sample linear correlation coefficient."""
    x, y = _pair(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = dx @ dx
    syy = dy @ dy
    if sxx == 0 or syy == 0:
        raise ConstantInputError("correlation undefined for constant input")
    return float(np.clip((dx @ dy) / np.sqrt(sxx * syy), -1.0, 1.0))


def spearman_srcc(x, y) -> float:
    """Pearson correlation of average ranks (ties share their mean rank)."""
    x, y = _pair(x, y)
    return pearson_lcc(rankdata(x), rankdata(y))


def mse(x, y) -> float:
    """Mean squared difference, summed with correctly rounded ``math.fsum``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.size != y.size or x.size == 0:
        raise ValueError("mse needs two nonempty sequences of equal length")
    return math.fsum((x - y) ** 2) / x.size


def binary_accuracy(scores, labels, threshold=0.5) -> float:
    """Fraction of correct same/different decisions.

    ``scores`` is either a vector of probabilities for label 1 (predict 1 when
    ``>= threshold``) or an ``(n, 2)`` matrix of class probabilities (argmax).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).reshape(-1)
    pred = scores.argmax(axis=1) if scores.ndim == 2 else (scores >= threshold).astype(int)
    if pred.size != labels.size or pred.size == 0:
        raise ValueError("scores and labels must be nonempty and aligned")
    return float(np.mean(pred == labels))


def system_aggregate(rows) -> list[tuple[str, float, float]]:
    """Per-system means of ``(system_id, prediction, ground_truth)`` rows."""
    groups: OrderedDict[str, list] = OrderedDict()
    for sys_id, pred, truth in rows:
        groups.setdefault(sys_id, []).append((pred, truth))
    out = []
    for sys_id, vals in groups.items():
        arr = np.asarray(vals, dtype=np.float64)
        out.append((sys_id, float(arr[:, 0].mean()), float(arr[:, 1].mean())))
    return out


@dataclass
class EvalReport:
    level: str
    lcc: float
    srcc: float
    mse: float
    n: int
    accuracy: float | None = None

    def as_dict(self):
        return asdict(self)


def report(pred, truth, level="utterance", accuracy=None) -> EvalReport:
    return EvalReport(level, pearson_lcc(pred, truth), spearman_srcc(pred, truth),
                      mse(pred, truth), len(pred), accuracy)


def evaluate_levels(system_ids, predictions, ground_truth) -> tuple[EvalReport, EvalReport]:
    """Utterance-level and system-level reports for the same predictions."""
    utt = report(predictions, ground_truth, "utterance")
    agg = system_aggregate(zip(system_ids, predictions, ground_truth))
    sys_pred = [p for _, p, _ in agg]
    sys_true = [t for _, _, t in agg]
    return utt, report(sys_pred, sys_true, "system")


@dataclass
class RatingDistribution:
    utterance_ids: list
    means: np.ndarray
    stds: np.ndarray
    mean_counts: np.ndarray
    std_counts: np.ndarray
    mean_edges: np.ndarray = MEAN_BIN_EDGES
    std_edges: np.ndarray = STD_BIN_EDGES


def rating_distribution(records, kind="mos") -> RatingDistribution:
    """Per-utterance mean and population std of ratings, with 0.25-wide histograms."""
    scores: OrderedDict[str, list] = OrderedDict()
    for r in records:
        if r.kind == kind:
            scores.setdefault(r.utterance_id, []).append(r.score)
    means = np.array([np.mean(s) for s in scores.values()])
    stds = np.array([np.std(s) for s in scores.values()])
    mean_counts, _ = np.histogram(means, MEAN_BIN_EDGES)
    std_counts, _ = np.histogram(stds, STD_BIN_EDGES)
    return RatingDistribution(list(scores), means, stds, mean_counts, std_counts)
