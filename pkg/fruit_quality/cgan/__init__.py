"""
Conditional GAN training and sampling.
"""

from .sampling import emit_comparison_grid, emit_sample_grid, grid_array, latent_batch, sample
from .trainer import (
    LOSS_LOG_FILE,
    CganConfig,
    CganResult,
    CheckpointRecord,
    LossLog,
    LossRow,
    checkpoint_epochs,
    train_cgan,
)

__all__ = [
    "LOSS_LOG_FILE",
    "CganConfig",
    "CganResult",
    "CheckpointRecord",
    "LossLog",
    "LossRow",
    "checkpoint_epochs",
    "emit_comparison_grid",
    "emit_sample_grid",
    "grid_array",
    "latent_batch",
    "sample",
    "train_cgan",
]
