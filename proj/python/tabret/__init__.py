"""Table-text block retrieval with denoised training data and rank-aware
block encodings. Thin wrapper over the compiled ``_core`` module."""

from ._core import (
    Bm25Index,
    DenseIndex,
    Error,
    Pipeline,
    RankEncoder,
    RankTrainConfig,
    bce_loss,
    contrastive_loss,
    default_config,
    numeric_columns,
    tokenize,
    write_synth,
)

__all__ = [
    "Bm25Index",
    "DenseIndex",
    "Error",
    "Pipeline",
    "RankEncoder",
    "RankTrainConfig",
    "bce_loss",
    "contrastive_loss",
    "default_config",
    "numeric_columns",
    "tokenize",
    "write_synth",
]
