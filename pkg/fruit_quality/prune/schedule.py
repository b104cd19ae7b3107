"""
Polynomial-decay sparsity schedule.
"""

# Standard library imports
import logging
from dataclasses import dataclass

# Local imports
from ..exceptions import PruningError

logger = logging.getLogger(__name__)

FULL_TARGETS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
CADENCES = ("epoch",)


@dataclass(frozen=True)
class PruningSchedule:
    """
    Sparsity ramp s(t) = s_f + (s_i - s_f) * (1 - t/T)^p over T fine-tuning epochs.

    Attributes:
        final_sparsity: s_f in [0, 1)
        initial_sparsity: s_i in [0, s_f]
        epochs: T
        power: p
        cadence: How often the mask is recomputed; only "epoch" is supported
    """

    final_sparsity: float = 0.5
    initial_sparsity: float = 0.0
    epochs: int = 20
    power: float = 3.0
    cadence: str = "epoch"

    def __post_init__(self):
        if not 0.0 <= self.final_sparsity < 1.0:
            raise PruningError(f"final_sparsity must lie in [0, 1), got {self.final_sparsity}")
        if not 0.0 <= self.initial_sparsity <= self.final_sparsity:
            raise PruningError(
                f"initial_sparsity must lie in [0, final_sparsity], got {self.initial_sparsity}"
            )
        if self.epochs < 1:
            raise PruningError(f"Schedule needs at least one epoch, got {self.epochs}")
        if self.power <= 0:
            raise PruningError(f"power must be positive, got {self.power}")
        if self.cadence not in CADENCES:
            raise PruningError(f"Unsupported cadence {self.cadence!r}; expected one of {CADENCES}")


def sparsity_at(t: float, sched: PruningSchedule) -> float:
    """
    Target sparsity after ``t`` of ``sched.epochs`` epochs.

    Raises:
        PruningError: t outside [0, T]
    """
    if not 0 <= t <= sched.epochs:
        raise PruningError(f"Epoch {t} outside schedule range [0, {sched.epochs}]")
    if t == 0:
        return sched.initial_sparsity
    remaining = (1.0 - t / sched.epochs) ** sched.power
    return sched.final_sparsity + (sched.initial_sparsity - sched.final_sparsity) * remaining
