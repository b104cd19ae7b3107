"""
Background replacement, resizing and range mapping for raw photographs.
"""

# Standard library imports
import logging

# Third-party imports
import numpy as np
from scipy import ndimage

# Local imports
from ..exceptions import DataError
from ..tensor import FLOAT64, Tensor, bilinear_resize

logger = logging.getLogger(__name__)

DEFAULT_BG_THRESHOLD = 0.08
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
# 4-neighbour connectivity
_FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


def to_unit_rgb(image: np.ndarray) -> np.ndarray:
    """uint8 (H, W, 3) -> float64 in [0, 1]; float input is taken as already in [0, 1]."""
    array = np.asarray(image)
    if array.ndim != 3 or array.shape[-1] not in (3, 4):
        raise DataError(f"Expected an (H, W, 3) RGB image, got shape {array.shape}")
    array = array[..., :3]
    if array.dtype == np.uint8:
        return array.astype(np.float64) / 255.0
    return np.clip(array.astype(np.float64), 0.0, 1.0)


def background_mask(rgb: np.ndarray, bg_threshold: float = DEFAULT_BG_THRESHOLD) -> np.ndarray:
    """
    Dark backdrop pixels of a [0, 1] RGB image.

    A pixel is backdrop when its luminance is below ``bg_threshold`` and it belongs
    to a dark region that touches one of the four image corners, so dark patches
    inside the fruit are kept.
    """
    luminance = rgb @ LUMA_WEIGHTS
    dark = luminance < bg_threshold
    components, _ = ndimage.label(dark, structure=_FOUR_CONNECTED)
    h, w = dark.shape
    corner_ids = {components[0, 0], components[0, w - 1], components[h - 1, 0], components[h - 1, w - 1]}
    corner_ids.discard(0)
    if not corner_ids:
        return np.zeros_like(dark)
    return np.isin(components, sorted(corner_ids))


def preprocess(
    image: np.ndarray, target_resolution: int, bg_threshold: float = DEFAULT_BG_THRESHOLD
) -> np.ndarray:
    """
    Turn a raw RGB photograph into network input.

    Args:
        image: uint8 or [0, 1] float array (H, W, 3), any size
        target_resolution: Output side length R
        bg_threshold: Luminance cut in [0, 1] for the dark backdrop

    Returns:
        float32 array (3, R, R) in [-1, 1]; replaced backdrop pixels are exactly +1

    Raises:
        DataError: empty image, wrong layout or out-of-range arguments
    """
    if np.asarray(image).size == 0:
        raise DataError("Cannot preprocess an empty image")
    if not 0.0 <= bg_threshold <= 1.0:
        raise DataError(f"bg_threshold must lie in [0, 1], got {bg_threshold}")
    if target_resolution < 1:
        raise DataError(f"target_resolution must be >= 1, got {target_resolution}")

    rgb = to_unit_rgb(image)
    rgb[background_mask(rgb, bg_threshold)] = 1.0

    # Resize the distance from white so untouched white stays exactly white.
    darkness = Tensor((1.0 - rgb).transpose(2, 0, 1)[None], dtype=FLOAT64)
    resized = bilinear_resize(darkness, target_resolution, target_resolution).data[0]
    unit = np.clip(1.0 - resized, 0.0, 1.0)
    return (unit * 2.0 - 1.0).astype(np.float32)
