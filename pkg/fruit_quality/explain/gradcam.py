"""
Grad-CAM heatmaps for the binary classifier.

The score explained is the pre-sigmoid logit for the unhealthy class and the
negated logit for the healthy class.
"""

# Standard library imports
import logging
from dataclasses import dataclass
from typing import Dict, Optional

# Third-party imports
import numpy as np

# Local imports
from .. import tensor as T
from ..data.dataset import HEALTHY, LABEL_NAMES, UNHEALTHY
from ..exceptions import ShapeError, TensorError
from ..nn.networks import ClassifierNet
from ..tensor import Tape, Tensor, backward

logger = logging.getLogger(__name__)


@dataclass
class GradCamMap:
    """
    Heatmap for one image.

    ``raw`` lives on the target layer's spatial grid and is non-negative;
    ``normalized`` is ``raw`` divided by its maximum (all zeros when the maximum is
    zero); ``upsampled`` is ``normalized`` resized to the input resolution.
    """

    raw: np.ndarray
    normalized: np.ndarray
    upsampled: np.ndarray
    layer: str
    probability: float
    explained_class: int
    channel_weights: np.ndarray

    @property
    def argmax(self):
        """(row, col) of the upsampled maximum; first occurrence wins."""
        row, col = np.unravel_index(int(np.argmax(self.upsampled)), self.upsampled.shape)
        return int(row), int(col)


def _as_batch(image: np.ndarray) -> np.ndarray:
    array = image.data if isinstance(image, Tensor) else np.asarray(image)
    if array.ndim == 3:
        array = array[None]
    if array.ndim != 4 or array.shape[0] != 1:
        raise ShapeError(f"grad_cam explains one (3, R, R) image, got shape {array.shape}")
    return array


def grad_cam(
    model: ClassifierNet,
    image: np.ndarray,
    target_layer: Optional[str] = None,
    target_class: Optional[int] = None,
) -> GradCamMap:
    """
    Compute the Grad-CAM map of ``image`` at ``target_layer``.

    Args:
        model: Trained classifier; its parameters are not modified
        image: (3, R, R) or (1, 3, R, R) in [-1, 1]
        target_layer: Backbone conv layer name; defaults to the deepest one
        target_class: Class to explain; defaults to the unhealthy class

    Raises:
        TensorError: ``target_layer`` is not a backbone conv layer
    """
    layers = model.conv_layer_names
    layer = target_layer or layers[-1]
    if layer not in layers:
        raise TensorError(f"Unknown conv layer {layer!r}; expected one of {layers}")
    if target_class is not None and target_class not in LABEL_NAMES:
        raise TensorError(f"target_class must be 0 or 1, got {target_class}")

    x = Tensor(_as_batch(image), dtype=model.dtype, requires_grad=True)
    capture: Dict[str, Tensor] = {}
    with Tape() as tape:
        logit = model.logits(x, capture=capture)
        probability = float(T.sigmoid(logit.detach()).item())
        explained = UNHEALTHY if target_class is None else target_class
        score = T.reduce_sum(logit)
        if explained == HEALTHY:
            score = T.scale(score, -1.0)
    activations = capture[layer]
    gradient = backward(tape, score, wrt=[activations])[activations][0]

    weights = gradient.mean(axis=(1, 2))
    raw = np.maximum(np.tensordot(weights, activations.data[0], axes=1), 0.0)
    peak = raw.max()
    normalized = raw / peak if peak > 0 else np.zeros_like(raw)
    size = model.resolution
    upsampled = T.bilinear_resize(Tensor(normalized[None, None]), size, size).data[0, 0]
    return GradCamMap(
        raw=raw,
        normalized=normalized,
        upsampled=np.clip(upsampled, 0.0, 1.0),
        layer=layer,
        probability=probability,
        explained_class=int(explained),
        channel_weights=weights,
    )
