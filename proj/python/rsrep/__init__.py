"""SimSiam pre-training and transfer evaluation for remote-sensing scenes."""

from ._core import (
    ConfigError,
    DimensionError,
    IoError,
    NumericalError,
    ValidationError,
    checkpoint_hash,
    class_similarity,
    collapse_statistic,
    finetune,
    lineval,
    load_config,
    negative_cosine,
    pretrain,
    render_table,
    seed_references,
    similarity,
    split_counts,
    symmetric_loss,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "IoError",
    "NumericalError",
    "ValidationError",
    "checkpoint_hash",
    "class_similarity",
    "collapse_statistic",
    "finetune",
    "lineval",
    "load_config",
    "negative_cosine",
    "pretrain",
    "render_table",
    "seed_references",
    "similarity",
    "split_counts",
    "symmetric_loss",
]
