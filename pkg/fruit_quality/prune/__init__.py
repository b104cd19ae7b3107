"""
Magnitude pruning under a polynomial-decay sparsity schedule.
"""

from .finetune import (
    DESK_TARGETS,
    MERGED_COLUMNS,
    PRUNE_COLUMNS,
    PRUNE_TABLE_FILE,
    PruneConfig,
    PruningRow,
    PruningTable,
    finetune,
    merge_pruning_tables,
    prune_finetune,
    pruning_sweep,
)
from .masking import (
    SCOPES,
    MaskedModel,
    PruneEpoch,
    apply_magnitude_mask,
    apply_masks,
    magnitude_masks,
    mask_sparsity,
    weight_sparsity,
)
from .schedule import FULL_TARGETS, PruningSchedule, sparsity_at

__all__ = [
    "DESK_TARGETS",
    "MERGED_COLUMNS",
    "FULL_TARGETS",
    "PRUNE_COLUMNS",
    "PRUNE_TABLE_FILE",
    "SCOPES",
    "MaskedModel",
    "PruneConfig",
    "PruneEpoch",
    "PruningRow",
    "PruningSchedule",
    "PruningTable",
    "apply_magnitude_mask",
    "apply_masks",
    "finetune",
    "magnitude_masks",
    "mask_sparsity",
    "merge_pruning_tables",
    "prune_finetune",
    "pruning_sweep",
    "sparsity_at",
    "weight_sparsity",
]
