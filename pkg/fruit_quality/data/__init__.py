"""
Fruit image datasets: toy generation, COCO ingestion, preprocessing, splits and PNG I/O.
"""

from .coco import DEFAULT_CATEGORY_MAP, ingest_coco
from .dataset import (
    DEFECT_KINDS,
    HEALTHY,
    REAL,
    SPLIT_NAMES,
    SYNTHETIC,
    UNHEALTHY,
    Dataset,
    Defect,
    LabeledImage,
)
from .png import dequantize, png_read, png_write, quantize, read_image
from .preprocess import DEFAULT_BG_THRESHOLD, background_mask, preprocess
from .splits import DEFAULT_FRACTIONS, split
from .toy import DEFECT_STYLES, generate_toy_dataset, render_toy_image

__all__ = [
    "DEFAULT_BG_THRESHOLD",
    "DEFAULT_CATEGORY_MAP",
    "DEFAULT_FRACTIONS",
    "DEFECT_KINDS",
    "DEFECT_STYLES",
    "HEALTHY",
    "REAL",
    "SPLIT_NAMES",
    "SYNTHETIC",
    "UNHEALTHY",
    "Dataset",
    "Defect",
    "LabeledImage",
    "background_mask",
    "dequantize",
    "generate_toy_dataset",
    "ingest_coco",
    "png_read",
    "png_write",
    "preprocess",
    "quantize",
    "read_image",
    "render_toy_image",
    "split",
]
