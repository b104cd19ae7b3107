"""
Heatmap overlays and batch explanation.
"""

# Standard library imports
import csv
import io
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, NamedTuple, Optional, Union

# Third-party imports
import numpy as np
from matplotlib import colormaps

# Local imports
from ..data.dataset import UNHEALTHY, Dataset
from ..data.png import png_write, quantize, to_channels_last
from ..exceptions import DataError, ShapeError
from ..nn.networks import ClassifierNet
from .gradcam import GradCamMap, grad_cam

logger = logging.getLogger(__name__)

OVERLAY_ALPHA = 0.4
COLORMAP = "jet"
BOX_DILATION = 0.1
EXPLAIN_TABLE_FILE = "gradcam.csv"
EXPLAIN_COLUMNS = (
    "image",
    "provenance",
    "label",
    "probability",
    "predicted",
    "argmax_row",
    "argmax_col",
    "inside_defect_box",
)

PathLike = Union[str, os.PathLike]


class OverlayPaths(NamedTuple):
    overlay: Path
    raw: Path


def colorize(heatmap: np.ndarray) -> np.ndarray:
    """Jet colours (H, W, 3) in [0, 1] for a heatmap in [0, 1]."""
    return colormaps[COLORMAP](np.clip(heatmap, 0.0, 1.0))[..., :3]


def render_overlay(cam: GradCamMap, image: np.ndarray, alpha: float = OVERLAY_ALPHA) -> np.ndarray:
    """
    Blend the colourised upsampled map over the de-normalised image.

    Args:
        image: (3, R, R) values in [-1, 1]

    Returns:
        uint8 (R, R, 3)
    """
    base = to_channels_last(quantize(image)).astype(np.float64)
    if base.shape[:2] != cam.upsampled.shape:
        raise ShapeError(
            f"Heatmap size {cam.upsampled.shape} does not match image size {base.shape[:2]}"
        )
    color = colorize(cam.upsampled) * 255.0
    blended = (1.0 - alpha) * base + alpha * color
    return np.clip(np.floor(blended + 0.5), 0, 255).astype(np.uint8)


def heatmap_gray(cam: GradCamMap) -> np.ndarray:
    """Upsampled normalised map as uint8 grayscale."""
    return np.floor(np.clip(cam.upsampled, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def overlay(
    cam: GradCamMap,
    image: np.ndarray,
    path: PathLike,
    raw_path: Optional[PathLike] = None,
    alpha: float = OVERLAY_ALPHA,
) -> OverlayPaths:
    """
    Write the overlay PNG and its grayscale companion.

    The companion defaults to ``<stem>_raw.png`` next to ``path``.
    """
    path = Path(path)
    raw_path = Path(raw_path) if raw_path is not None else path.with_name(f"{path.stem}_raw.png")
    written = png_write(render_overlay(cam, image, alpha), path)
    raw_written = png_write(heatmap_gray(cam), raw_path)
    return OverlayPaths(written, raw_written)


@dataclass(frozen=True)
class ExplainRow:
    image: str
    provenance: str
    label: int
    probability: float
    predicted: int
    argmax_row: int
    argmax_col: int
    inside_defect_box: Optional[bool]


@dataclass
class ExplainReport:
    rows: List[ExplainRow] = field(default_factory=list)

    def localization_rate(self) -> Optional[float]:
        """Share of correctly classified unhealthy images with boxes whose argmax hits a box."""
        hits = [
            row.inside_defect_box
            for row in self.rows
            if row.label == UNHEALTHY and row.predicted == UNHEALTHY and row.inside_defect_box is not None
        ]
        if not hits:
            return None
        return sum(hits) / len(hits)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(EXPLAIN_COLUMNS)
        for row in self.rows:
            inside = "" if row.inside_defect_box is None else int(row.inside_defect_box)
            writer.writerow(
                [
                    row.image,
                    row.provenance,
                    row.label,
                    f"{row.probability:.6f}",
                    row.predicted,
                    row.argmax_row,
                    row.argmax_col,
                    inside,
                ]
            )
        return buffer.getvalue()

    @classmethod
    def read_csv(cls, path: PathLike) -> "ExplainReport":
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            if tuple(reader.fieldnames or ()) != EXPLAIN_COLUMNS:
                raise DataError(f"{path}: expected columns {EXPLAIN_COLUMNS}, got {reader.fieldnames}")
            rows = [
                ExplainRow(
                    image=r["image"],
                    provenance=r["provenance"],
                    label=int(r["label"]),
                    probability=float(r["probability"]),
                    predicted=int(r["predicted"]),
                    argmax_row=int(r["argmax_row"]),
                    argmax_col=int(r["argmax_col"]),
                    inside_defect_box=None if r["inside_defect_box"] == "" else bool(int(r["inside_defect_box"])),
                )
                for r in reader
            ]
        return cls(rows)


def argmax_in_boxes(cam: GradCamMap, defects, size: int, dilation: float = BOX_DILATION) -> Optional[bool]:
    """Whether the heatmap argmax falls in any defect box grown by ``dilation`` of the image side."""
    if not defects:
        return None
    row, col = cam.argmax
    margin = dilation * size
    for defect in defects:
        x0, y0, x1, y1 = defect.dilated(margin, size)
        if x0 <= col < x1 and y0 <= row < y1:
            return True
    return False


def explain_batch(
    model: ClassifierNet,
    dataset: Dataset,
    out_dir: Optional[PathLike] = None,
    target_layer: Optional[str] = None,
    workers: Optional[int] = None,
    alpha: float = OVERLAY_ALPHA,
) -> ExplainReport:
    """
    Explain every image of ``dataset`` and optionally write overlays and a CSV.

    Each image is explained for its own label. Real and synthetic images may be
    mixed; provenance is carried into each row.
    With ``out_dir``, writes ``<out_dir>/<index>_<image stem>.png``, the grayscale
    companions and ``<out_dir>/gradcam.csv``.
    """
    size = dataset.resolution

    def explain(index: int) -> ExplainRow:
        item = dataset[index]
        cam = grad_cam(model, item.pixels, target_layer, target_class=item.label)
        if out_dir is not None:
            stem = Path(item.source).stem or f"image_{index:05d}"
            overlay(cam, item.pixels, Path(out_dir) / f"{index:05d}_{stem}.png", alpha=alpha)
        return ExplainRow(
            image=item.source,
            provenance=item.provenance,
            label=item.label,
            probability=cam.probability,
            predicted=int(cam.probability >= 0.5),
            argmax_row=cam.argmax[0],
            argmax_col=cam.argmax[1],
            inside_defect_box=argmax_in_boxes(cam, item.defects, size),
        )

    indices = list(range(len(dataset)))
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(explain, indices))
    else:
        rows = [explain(i) for i in indices]

    report = ExplainReport(rows)
    if out_dir is not None:
        target = Path(out_dir) / EXPLAIN_TABLE_FILE
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(report.to_csv(), encoding="utf-8")
    rate = report.localization_rate()
    if rate is not None:
        logger.info(f"Grad-CAM argmax inside a dilated defect box for {rate:.1%} of detected defects")
    return report
