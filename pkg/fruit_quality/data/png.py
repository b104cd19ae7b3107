"""
8-bit PNG reading and writing.

Images in the rest of the package are float (3, H, W) arrays in [-1, 1]; on disk
they are 8-bit RGB. Quantisation rounds half up: ``floor((v + 1) / 2 * 255 + 0.5)``.
"""

# Standard library imports
import logging
import os
import struct
from pathlib import Path
from typing import Union

# Third-party imports
import numpy as np
from PIL import Image, UnidentifiedImageError

# Local imports
from ..exceptions import PngError, UnsupportedDepthError

logger = logging.getLogger(__name__)

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
GRAYSCALE, RGB, RGBA = 0, 2, 6
SUPPORTED_COLOR_TYPES = {GRAYSCALE: "L", RGB: "RGB", RGBA: "RGBA"}

PathLike = Union[str, os.PathLike]


def quantize(pixels: np.ndarray) -> np.ndarray:
    """Map values in [-1, 1] to uint8 with round-half-up."""
    values = np.clip(np.asarray(pixels, dtype=np.float64), -1.0, 1.0)
    return np.floor((values + 1.0) / 2.0 * 255.0 + 0.5).astype(np.uint8)


def dequantize(pixels: np.ndarray) -> np.ndarray:
    """Map uint8 values back to float32 in [-1, 1]."""
    return (np.asarray(pixels, dtype=np.float32) / np.float32(255.0)) * 2.0 - 1.0


def to_channels_last(image: np.ndarray) -> np.ndarray:
    """
    (C, H, W) -> (H, W, C) for any sizes, including (3, H, 3) and (3, H, 4).

    Raises:
        PngError: the array is not three-dimensional
    """
    image = np.asarray(image)
    if image.ndim != 3:
        raise PngError(f"Expected a (C, H, W) image, got shape {image.shape}")
    return np.transpose(image, (1, 2, 0))


def _check_header(data: bytes, path: Path):
    if len(data) < 33 or data[:8] != PNG_SIGNATURE:
        raise PngError(f"{path}: not a PNG file")
    length, chunk = struct.unpack(">I4s", data[8:16])
    if chunk != b"IHDR" or length != 13:
        raise PngError(f"{path}: missing IHDR chunk")
    bit_depth, color_type = data[24], data[25]
    if bit_depth != 8:
        raise UnsupportedDepthError(f"{path}: unsupported bit depth {bit_depth}; only 8-bit PNG is read")
    if color_type not in SUPPORTED_COLOR_TYPES:
        raise PngError(f"{path}: unsupported colour type {color_type}")


def png_read(path: PathLike) -> np.ndarray:
    """
    Read an 8-bit grayscale, RGB or RGBA PNG.

    Returns:
        uint8 array (H, W, 3); alpha is discarded and grayscale is replicated

    Raises:
        UnsupportedDepthError: bit depth other than 8
        PngError: missing file, bad signature, unsupported colour type or decode failure
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise PngError(f"{path}: cannot read ({exc.strerror or exc})") from exc
    _check_header(data, path)
    try:
        with Image.open(path) as image:
            image.load()
            rgb = image.convert("RGB")
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise PngError(f"{path}: malformed PNG ({exc})") from exc
    return np.asarray(rgb, dtype=np.uint8).copy()


def read_image(path: PathLike) -> np.ndarray:
    """Read any Pillow-readable image as uint8 (H, W, 3); PNGs go through :func:`png_read`."""
    path = Path(path)
    if path.suffix.lower() == ".png":
        return png_read(path)
    try:
        with Image.open(path) as image:
            return np.asarray(image.convert("RGB"), dtype=np.uint8).copy()
    except FileNotFoundError as exc:
        raise PngError(f"{path}: cannot read (file not found)") from exc
    except (UnidentifiedImageError, OSError) as exc:
        raise PngError(f"{path}: unreadable image ({exc})") from exc


def png_write(image: np.ndarray, path: PathLike, channels_first: bool = False) -> Path:
    """
    Write an image as 8-bit PNG.

    Args:
        image: uint8 or float values in [-1, 1], laid out (H, W), (H, W, 3) or
            (H, W, 4); floats are quantised first
        path: Destination; parent directories are created
        channels_first: ``image`` is (C, H, W) and is transposed before writing
    """
    array = np.asarray(image)
    if channels_first:
        array = to_channels_last(array)
    if array.dtype != np.uint8:
        if not np.issubdtype(array.dtype, np.floating):
            raise PngError(f"Cannot write dtype {array.dtype} as PNG")
        array = quantize(array)
    if array.ndim == 3 and array.shape[-1] == 1:
        array = array[..., 0]
    if not (array.ndim == 2 or (array.ndim == 3 and array.shape[-1] in (3, 4))):
        raise PngError(f"Cannot write array of shape {array.shape} as PNG")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        Image.fromarray(np.ascontiguousarray(array)).save(path, format="PNG")
    except OSError as exc:
        raise PngError(f"{path}: cannot write ({exc})") from exc
    logger.debug(f"Wrote {array.shape} PNG to {path}")
    return path
