"""
Loss-curve charts.
"""

# Standard library imports
import logging
import os
from pathlib import Path
from typing import Dict, Sequence, Union

# Third-party imports
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

# Local imports
from ..cgan.trainer import LossLog

logger = logging.getLogger(__name__)

CHART_SIZE = (8, 4)
CHART_DPI = 100
# Drop the matplotlib version stamp so identical logs give identical files.
PNG_METADATA = {"Software": None}

PathLike = Union[str, os.PathLike]


def line_chart(
    series: Dict[str, Sequence[float]],
    x: Sequence[float],
    path: PathLike,
    title: str,
    xlabel: str = "Epoch",
    ylabel: str = "Loss",
) -> Path:
    """Plot each named series against ``x`` and write a PNG."""
    figure = Figure(figsize=CHART_SIZE, dpi=CHART_DPI)
    FigureCanvasAgg(figure)
    axes = figure.add_subplot(1, 1, 1)
    for label, values in series.items():
        axes.plot(x, values, label=label, linewidth=1.2)
    axes.set_title(title)
    axes.set_xlabel(xlabel)
    axes.set_ylabel(ylabel)
    axes.grid(True, alpha=0.3)
    if len(series) > 1:
        axes.legend()
    figure.tight_layout()

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    figure.savefig(path, format="png", metadata=PNG_METADATA)
    return path


def loss_charts(log: LossLog, out_dir: PathLike) -> Dict[str, Path]:
    """Generator and discriminator loss curves of a cGAN run."""
    epochs = [row.epoch for row in log.rows]
    out_dir = Path(out_dir)
    charts = {
        "generator": line_chart(
            {"generator": [row.g_loss for row in log.rows]},
            epochs,
            out_dir / "cgan_generator_loss.png",
            "Generator loss",
        ),
        "discriminator": line_chart(
            {
                "real": [row.d_loss_real for row in log.rows],
                "fake": [row.d_loss_fake for row in log.rows],
            },
            epochs,
            out_dir / "cgan_discriminator_loss.png",
            "Discriminator loss",
        ),
    }
    logger.debug(f"Wrote loss charts to {out_dir}")
    return charts
