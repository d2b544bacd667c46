"""Evaluation metrics (AUC with midrank ties, logloss) and seed aggregation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class MetricError(ValueError):
    """The metric is undefined for the given inputs."""


@dataclass(frozen=True, slots=True)
class EvalResult:
    auc: float
    logloss: float
    n_pos: int
    n_neg: int


@dataclass(frozen=True)
class AggregateResult:
    results: tuple[EvalResult, ...]
    mean_auc: float
    std_auc: float
    mean_logloss: float
    std_logloss: float


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Rank-based AUC with midrank tie handling.

    Equals pairwise counting: P(score+ > score-) + 0.5 * P(tie).
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"scores and labels must be equal-length 1-D, got {s.shape} vs {y.shape}")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise MetricError(f"AUC undefined: needs both classes (n_pos={n_pos}, n_neg={n_neg})")
    ranks = _midranks(s)
    rank_sum = float(np.sum(ranks[y == 1]))
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    n = len(values)
    ranks = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    return ranks


def logloss(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mean binary cross-entropy; callers must pass scores already in (0, 1)."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"scores and labels must be equal-length 1-D, got {s.shape} vs {y.shape}")
    if len(s) == 0:
        raise MetricError("logloss undefined on empty input")
    if np.any(s <= 0.0) or np.any(s >= 1.0):
        raise ValueError("logloss requires scores strictly inside (0, 1); clip predictions first")
    return float(-np.mean(y * np.log(s) + (1.0 - y) * np.log(1.0 - s)))


def aggregate(results: Sequence[EvalResult]) -> AggregateResult:
    """Mean and sample standard deviation (ddof=1) over seeds.

    A single result gets std 0.0 by convention.
    """
    if not results:
        raise ValueError("cannot aggregate an empty result list")
    aucs = np.array([r.auc for r in results], dtype=np.float64)
    losses = np.array([r.logloss for r in results], dtype=np.float64)
    std_auc = float(np.std(aucs, ddof=1)) if len(results) > 1 else 0.0
    std_logloss = float(np.std(losses, ddof=1)) if len(results) > 1 else 0.0
    return AggregateResult(
        results=tuple(results),
        mean_auc=float(np.mean(aucs)),
        std_auc=std_auc,
        mean_logloss=float(np.mean(losses)),
        std_logloss=std_logloss,
    )
