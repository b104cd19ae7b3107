"""
Early stopping on a higher-is-better validation metric.
"""

# Standard library imports
import enum
import logging
import math
from dataclasses import dataclass
from typing import Optional

# Local imports
from ..exceptions import OptimizerError

logger = logging.getLogger(__name__)

DEFAULT_PATIENCE = 10
DEFAULT_MAX_EPOCHS = 100


class StopDecision(enum.Enum):
    CONTINUE = "continue"
    STOP = "stop"


@dataclass
class EarlyStopState:
    """
    Tracks the best metric seen and how long it has not improved.

    ``epoch`` counts updates received so far; ``best_epoch`` is the 1-based epoch
    that produced ``best_metric``.
    """

    patience: int = DEFAULT_PATIENCE
    max_epochs: int = DEFAULT_MAX_EPOCHS
    best_metric: Optional[float] = None
    best_epoch: int = 0
    epochs_since_improvement: int = 0
    epoch: int = 0
    stopped: bool = False

    def __post_init__(self):
        if self.patience < 1:
            raise OptimizerError(f"Patience must be >= 1, got {self.patience}")
        if self.max_epochs < 1:
            raise OptimizerError(f"max_epochs must be >= 1, got {self.max_epochs}")


def early_stop_update(state: EarlyStopState, val_metric: float) -> StopDecision:
    """
    Record one epoch's validation metric and decide whether training continues.

    A strict improvement resets the counter. Training stops once the counter
    reaches the patience or the epoch count reaches ``max_epochs``.
    """
    if state.stopped:
        return StopDecision.STOP
    if not math.isfinite(val_metric):
        raise OptimizerError(f"Validation metric must be finite, got {val_metric}")

    state.epoch += 1
    if state.best_metric is None or val_metric > state.best_metric:
        state.best_metric = float(val_metric)
        state.best_epoch = state.epoch
        state.epochs_since_improvement = 0
    else:
        state.epochs_since_improvement += 1

    if state.epochs_since_improvement >= state.patience:
        logger.info(
            f"Early stop at epoch {state.epoch}: no improvement for {state.patience} epochs "
            f"(best {state.best_metric:.4f} at epoch {state.best_epoch})"
        )
        state.stopped = True
    elif state.epoch >= state.max_epochs:
        logger.info(f"Reached maximum of {state.max_epochs} epochs")
        state.stopped = True
    return StopDecision.STOP if state.stopped else StopDecision.CONTINUE
