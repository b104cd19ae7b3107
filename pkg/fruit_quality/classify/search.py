"""
Interpretation-width search and synthetic augmentation sweep.

Each (width, seed) or (count, seed) cell is an independent training run and may
execute on its own worker thread; tables are always assembled in sorted cell
order, so the CSV output does not depend on the worker count.
"""

# Standard library imports
import csv
import io
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, TypeVar, Union

# Third-party imports
import numpy as np

# Local imports
from ..cgan.sampling import sample
from ..data.dataset import HEALTHY, LABEL_NAMES, SYNTHETIC, UNHEALTHY, Dataset
from ..exceptions import DataError
from ..nn.networks import GeneratorNet
from .evaluation import require_all_real
from .training import ClassifierConfig, TrainRunRecord, train_classifier

logger = logging.getLogger(__name__)

DESK_WIDTHS = (8, 16, 32, 64, 128, 256, 512)
FULL_WIDTHS = (8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096, 8192)
DESK_COUNTS = (0, 25, 50, 100, 200, 400)
DEFAULT_SEEDS = (1, 2, 3)
DEFAULT_SAMPLE_SEED = 2024
WIDTH_TABLE_FILE = "width_search.csv"
AUGMENT_TABLE_FILE = "augment_sweep.csv"
WIDTH_COLUMNS = ("width", "seed", "val_accuracy")
AUGMENT_COLUMNS = ("per_class", "total", "seed", "val_accuracy", "train_size")

PathLike = Union[str, os.PathLike]
T = TypeVar("T")
R = TypeVar("R")


def _run_cells(fn: Callable[[T], R], cells: Sequence[T], workers: Optional[int]) -> List[R]:
    if workers and workers > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, cells))
    return [fn(cell) for cell in cells]


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def _write(text: str, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def _read_rows(path: PathLike, columns: Tuple[str, ...]) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != columns:
            raise DataError(f"{path}: expected columns {columns}, got {reader.fieldnames}")
        return list(reader)


@dataclass(frozen=True)
class WidthRow:
    width: int
    seed: int
    val_accuracy: float


@dataclass
class WidthSearchTable:
    """Validation accuracy per (width, seed) with per-width means."""

    rows: List[WidthRow] = field(default_factory=list)
    records: List[TrainRunRecord] = field(default_factory=list, compare=False)

    @property
    def widths(self) -> List[int]:
        return sorted({row.width for row in self.rows})

    def mean(self, width: int) -> float:
        values = [row.val_accuracy for row in self.rows if row.width == width]
        if not values:
            raise DataError(f"No runs for width {width}")
        return float(np.mean(values))

    def means(self) -> Dict[int, float]:
        return {width: self.mean(width) for width in self.widths}

    def best_width(self) -> int:
        """Width with the highest mean accuracy; the smaller width wins ties."""
        means = self.means()
        return max(means, key=lambda width: (means[width], -width))

    def best_run(self) -> WidthRow:
        """Single best (width, seed) cell; earlier cells win ties."""
        return max(self.rows, key=lambda row: (row.val_accuracy, -row.width, -row.seed))

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(WIDTH_COLUMNS)
        for row in self.rows:
            writer.writerow([row.width, row.seed, _fmt(row.val_accuracy)])
        for width in self.widths:
            writer.writerow([width, "mean", _fmt(self.mean(width))])
        return buffer.getvalue()

    def write_csv(self, path: PathLike) -> Path:
        return _write(self.to_csv(), path)

    @classmethod
    def read_csv(cls, path: PathLike) -> "WidthSearchTable":
        """Per-seed rows of a table written by ``write_csv``; mean rows are recomputed, not read."""
        rows = [
            WidthRow(int(r["width"]), int(r["seed"]), float(r["val_accuracy"]))
            for r in _read_rows(path, WIDTH_COLUMNS)
            if r["seed"] != "mean"
        ]
        return cls(rows=rows)


def width_search(
    widths: Sequence[int],
    seeds: Sequence[int],
    train: Dataset,
    val: Dataset,
    cfg: Optional[ClassifierConfig] = None,
    workers: Optional[int] = None,
) -> WidthSearchTable:
    """
    Train one classifier per (width, seed) and tabulate validation accuracy.

    Raises:
        DataError: empty width or seed list; training errors propagate
    """
    if not widths:
        raise DataError("width_search needs at least one width")
    if not seeds:
        raise DataError("width_search needs at least one seed")
    cells = [(int(w), int(s)) for w in sorted(set(widths)) for s in sorted(set(seeds))]
    logger.info(f"Width search over {len(cells)} runs (widths {sorted(set(widths))})")

    def run(cell: Tuple[int, int]) -> TrainRunRecord:
        width, seed = cell
        return train_classifier(train, val, width, seed, cfg)[1]

    records = _run_cells(run, cells, workers)
    table = WidthSearchTable(
        rows=[WidthRow(r.width, r.seed, r.final_val_accuracy) for r in records], records=records
    )
    best = table.best_width()
    logger.info(f"Best interpretation width {best} with mean accuracy {table.mean(best):.4f}")
    return table


@dataclass(frozen=True)
class AugmentRow:
    per_class: int
    total: int
    seed: int
    val_accuracy: float
    train_size: int


@dataclass
class AugmentTable:
    """Validation accuracy per (synthetic count per class, seed) with per-count means."""

    rows: List[AugmentRow] = field(default_factory=list)
    records: List[TrainRunRecord] = field(default_factory=list, compare=False)

    @property
    def counts(self) -> List[int]:
        return sorted({row.per_class for row in self.rows})

    def mean(self, per_class: int) -> float:
        values = [row.val_accuracy for row in self.rows if row.per_class == per_class]
        if not values:
            raise DataError(f"No runs for {per_class} synthetic images per class")
        return float(np.mean(values))

    def baseline_delta(self, per_class: int) -> Optional[float]:
        """Mean accuracy change against the no-augmentation count, if that count was run."""
        if 0 not in self.counts:
            return None
        return self.mean(per_class) - self.mean(0)

    def best_count(self) -> int:
        means = {count: self.mean(count) for count in self.counts}
        return max(means, key=lambda count: (means[count], -count))

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(AUGMENT_COLUMNS)
        for row in self.rows:
            writer.writerow(
                [row.per_class, row.total, row.seed, _fmt(row.val_accuracy), row.train_size]
            )
        for count in self.counts:
            writer.writerow([count, 2 * count, "mean", _fmt(self.mean(count)), ""])
        return buffer.getvalue()

    def write_csv(self, path: PathLike) -> Path:
        return _write(self.to_csv(), path)

    @classmethod
    def read_csv(cls, path: PathLike) -> "AugmentTable":
        rows = [
            AugmentRow(
                int(r["per_class"]),
                int(r["total"]),
                int(r["seed"]),
                float(r["val_accuracy"]),
                int(r["train_size"]),
            )
            for r in _read_rows(path, AUGMENT_COLUMNS)
            if r["seed"] != "mean"
        ]
        return cls(rows=rows)


def synthetic_stream(gen: GeneratorNet, max_per_class: int, sample_seed: int) -> Dataset:
    """
    ``max_per_class`` synthetic images of each class, labelled and flagged synthetic.

    Images of class c come from their own fixed-seed latent stream, so the first k
    images of a class are identical for every ``max_per_class >= k``.
    """
    blocks = []
    for label in sorted(LABEL_NAMES):
        images = sample(gen, [label] * max_per_class, seed=sample_seed * 2 + label)
        blocks.append(
            Dataset(
                images=images,
                labels=[label] * max_per_class,
                provenance=[SYNTHETIC] * max_per_class,
                sources=[f"synthetic_{LABEL_NAMES[label]}_{i:05d}" for i in range(max_per_class)],
            )
        )
    return blocks[HEALTHY].concat(blocks[UNHEALTHY])


def augmented_training_set(real_train: Dataset, stream: Dataset, per_class: int) -> Dataset:
    """Real training images plus the first ``per_class`` synthetic images of each class."""
    if per_class == 0:
        return real_train
    indices = []
    for label in sorted(LABEL_NAMES):
        members = np.flatnonzero(stream.labels == label)
        if members.size < per_class:
            raise DataError(f"Synthetic stream holds {members.size} images of class {label}, need {per_class}")
        indices.extend(members[:per_class].tolist())
    return real_train.concat(stream.subset(indices))


def augment_sweep(
    real_train: Dataset,
    val: Dataset,
    gen: GeneratorNet,
    counts_per_class: Sequence[int],
    width: int,
    seeds: Sequence[int],
    cfg: Optional[ClassifierConfig] = None,
    sample_seed: int = DEFAULT_SAMPLE_SEED,
    workers: Optional[int] = None,
) -> AugmentTable:
    """
    Train one classifier per (synthetic count, seed) with synthetic images added to training only.

    Raises:
        DataError: generator resolution differs from the data, the real training split
            already contains synthetic images, or no counts are given
    """
    if not counts_per_class:
        raise DataError("augment_sweep needs at least one count")
    if any(c < 0 for c in counts_per_class):
        raise DataError(f"Counts must be non-negative, got {list(counts_per_class)}")
    if gen.resolution != real_train.resolution:
        raise DataError(
            f"Generator resolution {gen.resolution} does not match data resolution {real_train.resolution}"
        )
    require_all_real(real_train, "real training")
    require_all_real(val, "validation")

    counts = sorted(set(int(c) for c in counts_per_class))
    stream = synthetic_stream(gen, max(counts), sample_seed) if max(counts) else None
    training_sets = {
        count: augmented_training_set(real_train, stream, count) if stream is not None else real_train
        for count in counts
    }
    cells = [(count, int(s)) for count in counts for s in sorted(set(seeds))]
    logger.info(f"Augmentation sweep over {len(cells)} runs (counts {counts})")

    def run(cell: Tuple[int, int]) -> TrainRunRecord:
        count, seed = cell
        return train_classifier(training_sets[count], val, width, seed, cfg)[1]

    records = _run_cells(run, cells, workers)
    rows = [
        AugmentRow(count, 2 * count, record.seed, record.final_val_accuracy, record.train_size)
        for (count, _), record in zip(cells, records)
    ]
    table = AugmentTable(rows=rows, records=records)
    for count in counts:
        delta = table.baseline_delta(count)
        suffix = f" ({delta:+.4f} vs. no augmentation)" if delta is not None else ""
        logger.info(f"{count} synthetic/class: mean accuracy {table.mean(count):.4f}{suffix}")
    return table
