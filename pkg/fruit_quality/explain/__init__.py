"""
Grad-CAM explanations and overlays.
"""

from .gradcam import GradCamMap, grad_cam
from .overlay import (
    EXPLAIN_TABLE_FILE,
    ExplainReport,
    ExplainRow,
    OverlayPaths,
    argmax_in_boxes,
    colorize,
    explain_batch,
    heatmap_gray,
    overlay,
    render_overlay,
)

__all__ = [
    "EXPLAIN_TABLE_FILE",
    "ExplainReport",
    "ExplainRow",
    "GradCamMap",
    "OverlayPaths",
    "argmax_in_boxes",
    "colorize",
    "explain_batch",
    "grad_cam",
    "heatmap_gray",
    "overlay",
    "render_overlay",
]
