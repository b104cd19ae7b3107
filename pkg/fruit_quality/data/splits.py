"""
Stratified train/validation/test assignment.
"""

# Standard library imports
import logging
import math
from typing import Sequence, Tuple

# Third-party imports
import numpy as np

# Local imports
from ..exceptions import SplitError
from .dataset import LABEL_NAMES, SPLIT_NAMES, Dataset

logger = logging.getLogger(__name__)

DEFAULT_FRACTIONS = (0.8, 0.1, 0.1)


def split_counts(n: int, fractions: Sequence[float]) -> Tuple[int, int, int]:
    """Per-split counts for ``n`` items: train and val rounded half up, test takes the rest."""
    train = int(math.floor(n * fractions[0] + 0.5))
    val = int(math.floor(n * fractions[1] + 0.5))
    val = min(val, n - train)
    return train, val, n - train - val


def split(dataset: Dataset, fractions: Sequence[float] = DEFAULT_FRACTIONS, seed: int = 0) -> Dataset:
    """
    Assign every image to train, val or test, stratified by label.

    Each class is shuffled with its own generator derived from (seed, label), then
    cut into consecutive runs of the requested sizes.

    Raises:
        SplitError: fractions not three positive values summing to 1, or a split
            that would receive no image of some class
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != len(SPLIT_NAMES) or any(f <= 0 for f in fractions):
        raise SplitError(f"Need three positive split fractions, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise SplitError(f"Split fractions must sum to 1, got {sum(fractions)}")

    assignment = np.empty(len(dataset), dtype="<U5")
    for label, label_name in LABEL_NAMES.items():
        members = np.flatnonzero(dataset.labels == label)
        counts = split_counts(members.size, fractions)
        for name, count in zip(SPLIT_NAMES, counts):
            if count == 0:
                raise SplitError(
                    f"Split {name!r} would receive no {label_name} images "
                    f"({members.size} available, fractions {fractions})"
                )
        rng = np.random.default_rng([int(seed) & ((1 << 63) - 1), label])
        shuffled = members[rng.permutation(members.size)]
        start = 0
        for name, count in zip(SPLIT_NAMES, counts):
            assignment[shuffled[start : start + count]] = name
            start += count

    result = dataset.with_splits(assignment)
    sizes = ", ".join(f"{name}={int(np.sum(assignment == name))}" for name in SPLIT_NAMES)
    logger.info(f"Split {len(dataset)} images into {sizes}")
    return result
