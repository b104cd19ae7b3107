"""
Adam, cross-entropy losses and early stopping.
"""

from .adam import AdamState, adam_step, named_gradients
from .early_stopping import EarlyStopState, StopDecision, early_stop_update
from .losses import DiscriminatorLoss, bce_loss, discriminator_loss, generator_loss

__all__ = [
    "AdamState",
    "DiscriminatorLoss",
    "EarlyStopState",
    "StopDecision",
    "adam_step",
    "bce_loss",
    "discriminator_loss",
    "early_stop_update",
    "generator_loss",
    "named_gradients",
]
