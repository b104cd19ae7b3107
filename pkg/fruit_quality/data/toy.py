"""
Procedural toy fruit images.

Each image is a shaded, rotated yellow ellipse on a white background. Unhealthy
images carry one or two painted defects whose bounding boxes are recorded.
Every image draws from its own generator seeded with (seed, index), so serial and
threaded generation produce identical datasets.
"""

# Standard library imports
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Tuple

# Third-party imports
import numpy as np

# Local imports
from ..exceptions import DataError
from .dataset import DEFECT_KINDS, HEALTHY, REAL, UNHEALTHY, Dataset, Defect, LabeledImage

logger = logging.getLogger(__name__)

MIN_RESOLUTION = 16
_SEED_MASK = (1 << 63) - 1

# Fruit geometry as fractions of the image side
FRUIT_SEMI_MAJOR = (0.30, 0.40)
FRUIT_SEMI_MINOR = (0.24, 0.32)
FRUIT_CENTER_JITTER = 0.05
FRUIT_BASE_COLOR = np.array([0.96, 0.84, 0.22])
FRUIT_COLOR_JITTER = 0.04
FRUIT_SHADING = 0.18
FRUIT_TEXTURE_NOISE = 0.015

SECOND_DEFECT_PROBABILITY = 0.35
SURFACE_PLACEMENT_RADIUS = 0.6
APEX_OFFSET = 0.85
DEFECT_COLOR_NOISE = 0.02


@dataclass(frozen=True)
class DefectStyle:
    color: Tuple[float, float, float]
    radius: Tuple[float, float]  # fraction of the image side
    density: float  # fraction of blob pixels painted
    placement: str  # "surface" or "apex"


DEFECT_STYLES = {
    "mould": DefectStyle((0.55, 0.62, 0.50), (0.07, 0.11), 0.75, "surface"),
    "gangrene": DefectStyle((0.35, 0.20, 0.08), (0.07, 0.11), 1.0, "surface"),
    "dark_style": DefectStyle((0.12, 0.10, 0.06), (0.04, 0.06), 1.0, "apex"),
}


@dataclass(frozen=True)
class _Fruit:
    cx: float
    cy: float
    a: float
    b: float
    theta: float

    def point(self, u: float, v: float) -> Tuple[float, float]:
        """Image coordinates of normalised ellipse coordinates (u, v)."""
        cos, sin = np.cos(self.theta), np.sin(self.theta)
        x = self.cx + self.a * u * cos - self.b * v * sin
        y = self.cy + self.a * u * sin + self.b * v * cos
        return float(x), float(y)


def _grid(resolution: int) -> Tuple[np.ndarray, np.ndarray]:
    yy, xx = np.mgrid[0:resolution, 0:resolution].astype(np.float64)
    return xx + 0.5, yy + 0.5


def _paint_fruit(rng: np.random.Generator, resolution: int):
    r = resolution
    fruit = _Fruit(
        cx=r / 2 + rng.uniform(-FRUIT_CENTER_JITTER, FRUIT_CENTER_JITTER) * r,
        cy=r / 2 + rng.uniform(-FRUIT_CENTER_JITTER, FRUIT_CENTER_JITTER) * r,
        a=rng.uniform(*FRUIT_SEMI_MAJOR) * r,
        b=rng.uniform(*FRUIT_SEMI_MINOR) * r,
        theta=rng.uniform(0.0, np.pi),
    )
    xx, yy = _grid(r)
    dx, dy = xx - fruit.cx, yy - fruit.cy
    cos, sin = np.cos(fruit.theta), np.sin(fruit.theta)
    u = (dx * cos + dy * sin) / fruit.a
    v = (-dx * sin + dy * cos) / fruit.b
    rho2 = u * u + v * v
    inside = rho2 <= 1.0

    color = np.clip(FRUIT_BASE_COLOR + rng.normal(0.0, FRUIT_COLOR_JITTER, 3), 0.0, 1.0)
    shade = (1.0 - FRUIT_SHADING * rho2)[..., None]
    texture = rng.normal(0.0, FRUIT_TEXTURE_NOISE, (r, r, 1))
    canvas = np.ones((r, r, 3))
    painted = np.clip(color * shade + texture, 0.0, 1.0)
    canvas[inside] = painted[inside]
    return canvas, inside, fruit


def _paint_defect(
    rng: np.random.Generator, canvas: np.ndarray, inside: np.ndarray, fruit: _Fruit, kind: str
) -> Defect:
    style = DEFECT_STYLES[kind]
    r = canvas.shape[0]
    if style.placement == "apex":
        side = 1.0 if rng.random() < 0.5 else -1.0
        px, py = fruit.point(side * APEX_OFFSET, 0.0)
    else:
        angle = rng.uniform(0.0, 2 * np.pi)
        radial = np.sqrt(rng.random()) * SURFACE_PLACEMENT_RADIUS
        px, py = fruit.point(radial * np.cos(angle), radial * np.sin(angle))
    radius = rng.uniform(*style.radius) * r

    xx, yy = _grid(r)
    blob = ((xx - px) ** 2 + (yy - py) ** 2 <= radius * radius) & inside
    if style.density < 1.0:
        blob &= rng.random((r, r)) < style.density
    iy = int(np.clip(np.floor(py), 0, r - 1))
    ix = int(np.clip(np.floor(px), 0, r - 1))
    blob[iy, ix] = True

    count = int(blob.sum())
    noise = rng.normal(0.0, DEFECT_COLOR_NOISE, (count, 3))
    canvas[blob] = np.clip(np.asarray(style.color) + noise, 0.0, 1.0)

    ys, xs = np.nonzero(blob)
    return Defect(kind, (int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1))


def render_toy_image(index: int, label: int, resolution: int, seed: int) -> LabeledImage:
    """Render image ``index`` of the toy dataset for ``seed``."""
    rng = np.random.default_rng([int(seed) & _SEED_MASK, int(index)])
    canvas, inside, fruit = _paint_fruit(rng, resolution)
    defects: List[Defect] = []
    if label == UNHEALTHY:
        count = 2 if rng.random() < SECOND_DEFECT_PROBABILITY else 1
        for _ in range(count):
            kind = DEFECT_KINDS[int(rng.integers(len(DEFECT_KINDS)))]
            defects.append(_paint_defect(rng, canvas, inside, fruit, kind))
    pixels = (canvas.transpose(2, 0, 1) * 2.0 - 1.0).astype(np.float32)
    return LabeledImage(
        pixels=pixels,
        label=label,
        defects=defects,
        source=f"toy_{index:05d}.png",
        provenance=REAL,
    )


def assign_labels(n: int, unhealthy_fraction: float, seed: int) -> np.ndarray:
    """Exactly round(n * fraction) unhealthy labels at seeded positions."""
    unhealthy = int(np.floor(n * unhealthy_fraction + 0.5))
    labels = np.full(n, HEALTHY, dtype=np.int64)
    order = np.random.default_rng(int(seed) & _SEED_MASK).permutation(n)
    labels[order[:unhealthy]] = UNHEALTHY
    return labels


def generate_toy_dataset(
    n: int,
    resolution: int,
    seed: int,
    unhealthy_fraction: float = 0.5,
    workers: Optional[int] = None,
) -> Dataset:
    """
    Generate a deterministic toy fruit dataset.

    Args:
        n: Number of images, at least 2
        resolution: Image side length, at least 16
        seed: Generation seed; the dataset depends on nothing else
        unhealthy_fraction: Share of unhealthy images in (0, 1)
        workers: Render threads; results do not depend on it

    Returns:
        Dataset with every image in the train split and provenance "real"
    """
    if n < 2:
        raise DataError(f"Toy dataset needs at least 2 images, got {n}")
    if resolution < MIN_RESOLUTION:
        raise DataError(f"Toy resolution must be >= {MIN_RESOLUTION}, got {resolution}")
    if not 0.0 < unhealthy_fraction < 1.0:
        raise DataError(f"unhealthy_fraction must lie in (0, 1), got {unhealthy_fraction}")

    labels = assign_labels(n, unhealthy_fraction, seed)
    jobs = [(i, int(labels[i]), resolution, seed) for i in range(n)]
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            images = list(pool.map(lambda job: render_toy_image(*job), jobs))
    else:
        images = [render_toy_image(*job) for job in jobs]

    dataset = Dataset.from_images(images, seed=seed)
    dataset.categories = [[d.kind for d in item.defects] for item in images]
    counts = dataset.class_counts()
    logger.info(
        f"Generated {n} toy images at {resolution}x{resolution} "
        f"({counts[HEALTHY]} healthy, {counts[UNHEALTHY]} unhealthy) from seed {seed}"
    )
    return dataset
