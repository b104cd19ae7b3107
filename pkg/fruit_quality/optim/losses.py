"""
Binary cross-entropy and the adversarial loss pair.
"""

# Standard library imports
import logging
from typing import NamedTuple, Sequence, Union

# Third-party imports
import numpy as np

# Local imports
from .. import tensor as T
from ..exceptions import OptimizerError
from ..tensor import Tensor

logger = logging.getLogger(__name__)

BCE_CLAMP = 1e-7

Targets = Union[Tensor, np.ndarray, Sequence[float], float]


class DiscriminatorLoss(NamedTuple):
    total: Tensor
    real: Tensor
    fake: Tensor


def _targets(target: Targets, like: Tensor) -> Tensor:
    values = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=like.dtype)
    values = np.broadcast_to(values, like.shape)
    if not np.all((values == 0) | (values == 1)):
        raise OptimizerError("BCE targets must be 0 or 1")
    return Tensor(values, dtype=like.dtype)


def bce_loss(pred: Tensor, target: Targets) -> Tensor:
    """
    Mean binary cross-entropy of probabilities ``pred`` against 0/1 ``target``.

    Predictions are clamped to [1e-7, 1 - 1e-7] first, so the loss is finite for
    saturated inputs.
    """
    t = _targets(target, pred)
    one = Tensor(np.ones(pred.shape), dtype=pred.dtype)
    p = T.clip(pred, BCE_CLAMP, 1.0 - BCE_CLAMP)
    positive = T.mul(t, T.log(p))
    negative = T.mul(T.sub(one, t), T.log(T.sub(one, p)))
    return T.scale(T.mean(T.add(positive, negative)), -1.0)


def discriminator_loss(real_logits: Tensor, fake_logits: Tensor) -> DiscriminatorLoss:
    """
    Minimax discriminator objective as two BCE terms.

    Returns:
        (total, real term, fake term); total = BCE(sigmoid(real), 1) + BCE(sigmoid(fake), 0)
    """
    real = bce_loss(T.sigmoid(real_logits), 1.0)
    fake = bce_loss(T.sigmoid(fake_logits), 0.0)
    return DiscriminatorLoss(T.add(real, fake), real, fake)


def generator_loss(fake_logits: Tensor, saturating: bool = False) -> Tensor:
    """
    Generator objective on the discriminator's logits for generated images.

    The default non-saturating form is BCE(sigmoid(fake), 1). With ``saturating``
    the literal minimax term mean(log(1 - D(G(z)))) is returned instead; it is
    negative and only used to compare against the closed-form objective.
    """
    probs = T.sigmoid(fake_logits)
    if saturating:
        return T.scale(bce_loss(probs, 0.0), -1.0)
    return bce_loss(probs, 1.0)
