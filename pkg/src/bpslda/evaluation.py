"""Prediction-quality metrics and topic-distribution diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateTruthError, OneClassOnlyError


@dataclass(frozen=True)
class MetricReport:
    name: str
    value: float
    n: int
    per_fold: tuple = field(default=())

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("a metric needs at least one sample")


def predictive_r2(y_true, y_pred) -> float:
    """1 - SSE/SST against the mean of y_true on this held-out set."""
    y_true = np.asarray(y_true, dtype=np.float64).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=np.float64).reshape(-1)
    if y_true.shape != y_pred.shape or y_true.size < 2:
        raise ValueError("need equal-length vectors with at least two points")
    centered = y_true - y_true.mean()
    sst = float(centered @ centered)
    if sst == 0.0:
        raise DegenerateTruthError("targets are all identical")
    resid = y_true - y_pred
    return 1.0 - float(resid @ resid) / sst


def auc(scores, labels) -> float:
    """Probability a random positive outscores a random negative; ties count 1/2.

    Computed from the rank statistic, which is exact under ties.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be binary 0/1")
    positive = labels == 1
    n_pos = int(positive.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnlyError("both classes must be present")
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    # average 1-based rank of each tie group
    group_rank = np.cumsum(counts) - (counts - 1) / 2.0
    rank_sum = float(group_rank[inverse][positive].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def topic_sparsity(thetas, mass: float) -> float:
    """Mean fraction of topics needed to cover the target probability mass.

    For each distribution, the smallest m with the m largest entries
    summing to at least ``mass``; returns mean(m)/K.
    """
    if not 0.0 < mass < 1.0:
        raise ValueError("mass must be in (0, 1)")
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    if thetas.size == 0:
        raise ValueError("need at least one distribution")
    k = thetas.shape[1]
    tail = np.cumsum(np.sort(thetas, axis=1)[:, ::-1], axis=1)
    # 1e-12 slack so e.g. nine 0.1 entries cover mass 0.9 despite rounding
    needed = np.argmax(tail >= mass - 1e-12, axis=1) + 1
    return float(needed.mean()) / k
