"""Similarity-to-weight transform and per-sample weight assignment.

Positives get ``alpha + (1 - alpha) * sigmoid(beta * (s - mu))``; negatives
stay at weight 1. Weights are static per experiment: they are computed once
from the frozen similarity table and never look at origin tags, so injected
noise is treated exactly like organic data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import DatasetSplit, Interaction
from .semantics import SimilarityTable


class WeightError(ValueError):
    """A positive sample has no similarity score and is not a sentinel."""


@dataclass(frozen=True, slots=True)
class WeightConfig:
    alpha: float
    beta: float
    mu: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not (self.beta > 0.0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be a positive finite real, got {self.beta}")
        if not math.isfinite(self.mu):
            raise ValueError(f"mu must be finite, got {self.mu}")


@dataclass(frozen=True, slots=True)
class WeightedSample:
    interaction: Interaction
    weight: float


def _sigmoid(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def weight_of(s: float, cfg: WeightConfig) -> float:
    """Map a similarity score to a training weight in [alpha, 1].

    Written as ``t + alpha * (1 - t)`` so that the midpoint s = mu gives
    exactly (1 + alpha) / 2 and alpha = 1 gives exactly 1.0.
    """
    t = _sigmoid(cfg.beta * (s - cfg.mu))
    return t + cfg.alpha * (1.0 - t)


def assign_weights(
    split: DatasetSplit,
    sims: SimilarityTable,
    cfg: WeightConfig,
) -> list[WeightedSample]:
    """Weight every train sample, preserving input order.

    Negatives and sentinel (empty-profile) positives get weight 1; other
    positives get ``weight_of`` of their similarity score.
    """
    out: list[WeightedSample] = []
    for it in split.train:
        if it.label == 0:
            out.append(WeightedSample(it, 1.0))
            continue
        key = (it.user_id, it.item_id)
        if key in sims.sentinels:
            out.append(WeightedSample(it, 1.0))
        elif key in sims.scores:
            out.append(WeightedSample(it, weight_of(sims.scores[key], cfg)))
        else:
            raise WeightError(f"train positive {key} has no similarity score or sentinel entry")
    return out


def dump_weights_tsv(
    path: str | Path,
    samples: Sequence[WeightedSample],
    sims: SimilarityTable,
) -> None:
    """Audit dump: ``user_id<TAB>item_id<TAB>similarity<TAB>weight`` per positive.

    Sentinel positives get ``nan`` in the similarity column.
    """
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("user_id\titem_id\tsimilarity\tweight\n")
        for ws in samples:
            it = ws.interaction
            if it.label != 1:
                continue
            s = sims.scores.get((it.user_id, it.item_id))
            s_txt = "nan" if s is None else f"{s:.10g}"
            fh.write(f"{it.user_id}\t{it.item_id}\t{s_txt}\t{ws.weight:.10g}\n")
