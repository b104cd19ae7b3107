"""
Magnitude masks for conv and dense weights.

Masks are boolean arrays, True where a weight is kept. Ranking is by absolute value
with ties broken by flat index; weights zeroed by an earlier mask always rank first,
so a mask sequence built with ``previous`` only ever grows.
"""

# Standard library imports
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

# Third-party imports
import numpy as np

# Local imports
from ..exceptions import PruningError
from ..nn.init import ParameterSet, is_prunable
from ..nn.networks import ClassifierNet
from ..tensor import Tensor

logger = logging.getLogger(__name__)

SCOPES = ("tensor", "global")

Masks = Dict[str, np.ndarray]


def _rank_order(values: np.ndarray, previous: Optional[np.ndarray]) -> np.ndarray:
    """Flat indices from first-to-prune to last."""
    magnitude = np.abs(values.reshape(-1))
    kept_before = np.ones(magnitude.size, dtype=np.int8) if previous is None else previous.reshape(-1).astype(np.int8)
    # lexsort: last key is primary; both sorts are stable
    return np.lexsort((magnitude, kept_before))


def _prune_count(size: int, target: float) -> int:
    return int(np.floor(size * target + 0.5))


def magnitude_masks(
    params: ParameterSet,
    target: float,
    previous: Optional[Masks] = None,
    scope: str = "tensor",
) -> Masks:
    """
    Keep-masks zeroing the smallest-magnitude ``target`` fraction of prunable weights.

    Args:
        params: Parameter set; only ``*.weight`` tensors receive masks
        target: Sparsity in [0, 1)
        previous: Masks from the previous schedule step; every weight they zeroed stays zeroed
        scope: "tensor" ranks within each tensor, "global" ranks all prunable weights together

    Raises:
        PruningError: target outside [0, 1), unknown scope, or no prunable weights
    """
    if not 0.0 <= target < 1.0:
        raise PruningError(f"Target sparsity must lie in [0, 1), got {target}")
    if scope not in SCOPES:
        raise PruningError(f"Unknown pruning scope {scope!r}; expected one of {SCOPES}")
    names = [name for name in params if is_prunable(name)]
    if not names:
        raise PruningError("Model has no prunable weights")

    masks: Masks = OrderedDict()
    if scope == "tensor":
        for name in names:
            values = params[name].data
            order = _rank_order(values, previous.get(name) if previous else None)
            keep = np.ones(values.size, dtype=bool)
            keep[order[: _prune_count(values.size, target)]] = False
            masks[name] = keep.reshape(values.shape)
    else:
        flat = np.concatenate([params[name].data.reshape(-1) for name in names])
        prev_flat = (
            np.concatenate([previous[name].reshape(-1) for name in names]) if previous else None
        )
        order = _rank_order(flat, prev_flat)
        keep = np.ones(flat.size, dtype=bool)
        keep[order[: _prune_count(flat.size, target)]] = False
        offset = 0
        for name in names:
            size = params[name].size
            masks[name] = keep[offset : offset + size].reshape(params[name].shape)
            offset += size

    if previous:
        for name in names:
            masks[name] &= previous[name]
    return masks


def apply_masks(params: ParameterSet, masks: Masks) -> ParameterSet:
    """Copy of ``params`` with masked weights set to exactly zero."""
    masked: ParameterSet = OrderedDict()
    for name, tensor in params.items():
        if name in masks:
            values = np.where(masks[name], tensor.data, tensor.dtype.type(0))
            masked[name] = Tensor(values, dtype=tensor.dtype, requires_grad=True, name=name)
        else:
            masked[name] = tensor
    return masked


def mask_sparsity(masks: Masks) -> float:
    total = sum(mask.size for mask in masks.values())
    zeroed = sum(int(mask.size - np.count_nonzero(mask)) for mask in masks.values())
    return zeroed / total if total else 0.0


def weight_sparsity(params: ParameterSet) -> float:
    """Measured fraction of exactly-zero prunable weights."""
    sizes = [params[name].size for name in params if is_prunable(name)]
    zeros = [int(np.sum(params[name].data == 0)) for name in params if is_prunable(name)]
    return sum(zeros) / sum(sizes) if sizes else 0.0


@dataclass(frozen=True)
class PruneEpoch:
    epoch: int
    target_sparsity: float
    achieved_sparsity: float
    train_loss: float
    val_accuracy: float


@dataclass
class MaskedModel:
    """Classifier with keep-masks over its prunable weights."""

    model: ClassifierNet
    masks: Masks
    scope: str = "tensor"
    history: List[PruneEpoch] = field(default_factory=list)

    @property
    def params(self) -> ParameterSet:
        return self.model.params

    def sparsity(self) -> float:
        return mask_sparsity(self.masks)

    def weight_sparsity(self) -> float:
        return weight_sparsity(self.model.params)

    def size_percent(self) -> float:
        """Nonzero prunable weights as a percentage of all prunable weights."""
        return 100.0 * (1.0 - self.weight_sparsity())

    def masked_weights_are_zero(self) -> bool:
        return all(
            not np.any(self.model.params[name].data[~mask]) for name, mask in self.masks.items()
        )

    def metadata(self) -> Dict[str, Any]:
        return {
            "scope": self.scope,
            "mask_sparsity": self.sparsity(),
            "weight_sparsity": self.weight_sparsity(),
        }


def apply_magnitude_mask(
    model: ClassifierNet,
    target_sparsity: float,
    previous: Optional[MaskedModel] = None,
    scope: str = "tensor",
) -> MaskedModel:
    """Mask ``model`` to ``target_sparsity`` and zero the masked weights."""
    masks = magnitude_masks(
        model.params, target_sparsity, previous.masks if previous is not None else None, scope
    )
    pruned = model.with_params(apply_masks(model.params, masks))
    logger.debug(f"Masked model to sparsity {mask_sparsity(masks):.4f} (target {target_sparsity:.4f})")
    return MaskedModel(pruned, masks, scope, list(previous.history) if previous is not None else [])
