"""
Conditional sampling and sample grids.
"""

# Standard library imports
import logging
import math
import os
from pathlib import Path
from typing import Sequence, Union

# Third-party imports
import numpy as np

# Local imports
from ..data.dataset import LABEL_NAMES
from ..data.png import png_write, quantize, to_channels_last
from ..exceptions import DataError
from ..nn.networks import GeneratorNet

logger = logging.getLogger(__name__)

GRID_SEPARATOR = 2
GRID_BACKGROUND = 255
_SEED_MASK = (1 << 63) - 1

PathLike = Union[str, os.PathLike]


def latent_batch(n: int, latent_dim: int, seed: int) -> np.ndarray:
    """Standard-normal latent vectors (n, latent_dim) drawn from ``seed``."""
    return np.random.default_rng(int(seed) & _SEED_MASK).standard_normal((n, latent_dim))


def sample(
    gen: GeneratorNet, labels: Sequence[int], seed: int, batch_size: int = 64
) -> np.ndarray:
    """
    Generate one image per requested label.

    The i-th latent vector depends only on ``seed`` and i, so two calls with the same
    seed and label count share their latents.

    Returns:
        float32 array (N, 3, R, R) with values in (-1, 1)
    """
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    invalid = sorted(set(labels.tolist()) - set(LABEL_NAMES))
    if invalid:
        raise DataError(f"Invalid labels {invalid}; expected 0 (healthy) or 1 (unhealthy)")
    if labels.size == 0:
        return np.zeros((0, 3, gen.resolution, gen.resolution), dtype=np.float32)
    z = latent_batch(labels.size, gen.latent_dim, seed)
    chunks = [
        gen.forward(z[start : start + batch_size], labels[start : start + batch_size]).data
        for start in range(0, labels.size, batch_size)
    ]
    return np.concatenate(chunks).astype(np.float32)


def grid_array(images: np.ndarray, cols: int) -> np.ndarray:
    """
    Tile (N, 3, R, R) images row-major into a uint8 (H, W, 3) canvas.

    Tiles are separated and framed by 2-pixel white lines; with c columns and r rows
    the canvas is (r*R + 2(r+1)) x (c*R + 2(c+1)).
    """
    images = np.asarray(images)
    if images.ndim != 4 or images.shape[0] == 0:
        raise DataError(f"Need a non-empty (N, 3, R, R) image batch, got shape {images.shape}")
    if cols < 1:
        raise DataError(f"Grid needs at least one column, got {cols}")
    n, _, h, w = images.shape
    cols = min(cols, n)
    rows = math.ceil(n / cols)
    sep = GRID_SEPARATOR
    canvas = np.full(
        (rows * h + sep * (rows + 1), cols * w + sep * (cols + 1), 3), GRID_BACKGROUND, np.uint8
    )
    tiles = quantize(images)
    for index in range(n):
        row, col = divmod(index, cols)
        top = sep + row * (h + sep)
        left = sep + col * (w + sep)
        canvas[top : top + h, left : left + w] = to_channels_last(tiles[index])
    return canvas


def emit_sample_grid(images: np.ndarray, cols: int, path: PathLike) -> Path:
    """Write :func:`grid_array` of ``images`` as a PNG."""
    written = png_write(grid_array(images, cols), path)
    logger.info(f"Wrote sample grid of {len(images)} images to {written}")
    return written


def emit_comparison_grid(
    real: np.ndarray, synthetic: np.ndarray, cols: int, path: PathLike
) -> Path:
    """Real images on the left, synthetic on the right, sharing one separator column."""
    left = grid_array(real, cols)
    right = grid_array(synthetic, cols)
    height = max(left.shape[0], right.shape[0])

    def pad(canvas: np.ndarray) -> np.ndarray:
        extra = height - canvas.shape[0]
        return np.pad(canvas, ((0, extra), (0, 0), (0, 0)), constant_values=GRID_BACKGROUND)

    combined = np.concatenate([pad(left), pad(right)[:, GRID_SEPARATOR:]], axis=1)
    written = png_write(combined, path)
    logger.info(f"Wrote real/synthetic comparison grid to {written}")
    return written
