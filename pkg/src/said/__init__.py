"""Semantics-aware sample reweighting benchmark for implicit-feedback CTR models."""

from .corpus import (
    DatasetSplit,
    Interaction,
    ItemText,
    NoiseSpec,
    Origin,
    chronological_split,
    inject_noise,
    load_interactions_tsv,
    load_movielens,
    sample_negatives,
)
from .metrics import AggregateResult, EvalResult, aggregate, auc, logloss
from .model import CtrModel, TrainConfig, train, weighted_bce
from .reweight import WeightConfig, WeightedSample, assign_weights, weight_of
from .semantics import (
    EmbeddingTable,
    FallbackEncoder,
    ProfileText,
    SimilarityTable,
    build_profile_text,
    compute_similarity_table,
    cosine,
    encode_fallback,
    load_embedding_table,
    save_embedding_table,
)

__version__ = "0.1.0"

__all__ = [
    "AggregateResult",
    "CtrModel",
    "DatasetSplit",
    "EmbeddingTable",
    "EvalResult",
    "FallbackEncoder",
    "Interaction",
    "ItemText",
    "NoiseSpec",
    "Origin",
    "ProfileText",
    "SimilarityTable",
    "TrainConfig",
    "WeightConfig",
    "WeightedSample",
    "aggregate",
    "assign_weights",
    "auc",
    "build_profile_text",
    "chronological_split",
    "compute_similarity_table",
    "cosine",
    "encode_fallback",
    "inject_noise",
    "load_embedding_table",
    "load_interactions_tsv",
    "load_movielens",
    "logloss",
    "sample_negatives",
    "save_embedding_table",
    "train",
    "weight_of",
    "weighted_bce",
]
