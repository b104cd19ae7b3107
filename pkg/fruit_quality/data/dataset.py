"""
Labelled fruit image collections and their on-disk form.

A dataset directory holds three files:

- ``dataset.npz``: pixels (N, 3, R, R) float32 in [-1, 1], labels, splits, provenance, seed
- ``manifest.csv``: file, split, label, provenance, categories (one row per image)
- ``defects.json``: per-image defect kinds and boxes
"""

# Standard library imports
import csv
import io
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

# Third-party imports
import numpy as np

# Local imports
from ..exceptions import DataError
from ..tensor import Tensor

logger = logging.getLogger(__name__)

HEALTHY = 0
UNHEALTHY = 1
LABEL_NAMES = {HEALTHY: "healthy", UNHEALTHY: "unhealthy"}
DEFECT_KINDS = ("mould", "gangrene", "dark_style")
SPLIT_NAMES = ("train", "val", "test")
REAL = "real"
SYNTHETIC = "synthetic"
PROVENANCES = (REAL, SYNTHETIC)

DATASET_FILE = "dataset.npz"
MANIFEST_FILE = "manifest.csv"
DEFECTS_FILE = "defects.json"
MANIFEST_COLUMNS = ("file", "split", "label", "provenance", "categories")

Box = Tuple[int, int, int, int]
PathLike = Union[str, os.PathLike]


@dataclass(frozen=True)
class Defect:
    """One visible defect; ``box`` is (x0, y0, x1, y1) in pixels with exclusive x1, y1."""

    kind: str
    box: Box

    def __post_init__(self):
        if self.kind not in DEFECT_KINDS:
            raise DataError(f"Unknown defect kind {self.kind!r}")
        x0, y0, x1, y1 = self.box
        if not (0 <= x0 < x1 and 0 <= y0 < y1):
            raise DataError(f"Degenerate defect box {self.box}")

    def dilated(self, margin: float, size: int) -> Box:
        """Box grown by ``margin`` pixels on every side, clipped to a ``size`` square."""
        x0, y0, x1, y1 = self.box
        return (
            max(0, int(np.floor(x0 - margin))),
            max(0, int(np.floor(y0 - margin))),
            min(size, int(np.ceil(x1 + margin))),
            min(size, int(np.ceil(y1 + margin))),
        )

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "box": list(self.box)}

    @classmethod
    def from_dict(cls, data: Dict) -> "Defect":
        return cls(kind=data["kind"], box=tuple(int(v) for v in data["box"]))


@dataclass
class LabeledImage:
    """A single image with values in [-1, 1] laid out (3, R, R)."""

    pixels: np.ndarray
    label: int
    defects: List[Defect] = field(default_factory=list)
    source: str = ""
    provenance: str = REAL
    split: str = "train"

    def __post_init__(self):
        if self.label not in LABEL_NAMES:
            raise DataError(f"Label must be 0 or 1, got {self.label}")
        if self.label == HEALTHY and self.defects:
            raise DataError(f"Healthy image {self.source or '<unnamed>'} carries defects")

    @property
    def tensor(self) -> Tensor:
        return Tensor(self.pixels)

    @property
    def resolution(self) -> int:
        return int(self.pixels.shape[-1])


class Dataset:
    """
    Fixed-resolution image collection with split and provenance bookkeeping.

    Instances are treated as values: every transforming method returns a new
    Dataset and leaves the receiver untouched.
    """

    def __init__(
        self,
        images: np.ndarray,
        labels: Sequence[int],
        splits: Optional[Sequence[str]] = None,
        provenance: Optional[Sequence[str]] = None,
        defects: Optional[Sequence[Sequence[Defect]]] = None,
        sources: Optional[Sequence[str]] = None,
        categories: Optional[Sequence[Sequence[str]]] = None,
        seed: Optional[int] = None,
    ):
        images = np.asarray(images, dtype=np.float32)
        n = images.shape[0] if images.ndim else 0
        if images.ndim != 4 or images.shape[1] != 3 or images.shape[2] != images.shape[3]:
            raise DataError(f"Images must be (N, 3, R, R), got {images.shape}")
        if n and (images.min() < -1.0 or images.max() > 1.0):
            raise DataError("Pixel values must lie in [-1, 1]")
        self.images = images
        self.labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        self.splits = np.asarray(splits if splits is not None else ["train"] * n, dtype="<U5")
        self.provenance = np.asarray(
            provenance if provenance is not None else [REAL] * n, dtype="<U9"
        )
        self.defects: List[List[Defect]] = [list(d) for d in (defects or [[] for _ in range(n)])]
        self.sources: List[str] = list(sources) if sources is not None else [
            f"image_{i:05d}" for i in range(n)
        ]
        self.categories: List[List[str]] = [list(c) for c in (categories or [[] for _ in range(n)])]
        self.seed = seed
        self._validate()

    def _validate(self):
        n = len(self)
        for name, values in (
            ("labels", self.labels),
            ("splits", self.splits),
            ("provenance", self.provenance),
            ("defects", self.defects),
            ("sources", self.sources),
            ("categories", self.categories),
        ):
            if len(values) != n:
                raise DataError(f"Dataset has {n} images but {len(values)} {name}")
        if n and not np.isin(self.labels, list(LABEL_NAMES)).all():
            raise DataError("Labels must be 0 or 1")
        bad = set(self.splits.tolist()) - set(SPLIT_NAMES)
        if bad:
            raise DataError(f"Unknown split names {sorted(bad)}")
        bad = set(self.provenance.tolist()) - set(PROVENANCES)
        if bad:
            raise DataError(f"Unknown provenance values {sorted(bad)}")
        size = self.resolution
        for index, image_defects in enumerate(self.defects):
            if image_defects and self.labels[index] == HEALTHY:
                raise DataError(f"Healthy image {self.sources[index]} carries defects")
            for defect in image_defects:
                if defect.box[2] > size or defect.box[3] > size:
                    raise DataError(
                        f"Defect box {defect.box} of {self.sources[index]} exceeds {size}x{size}"
                    )

    def __len__(self) -> int:
        return int(self.images.shape[0])

    def __getitem__(self, index: int) -> LabeledImage:
        return LabeledImage(
            pixels=self.images[index],
            label=int(self.labels[index]),
            defects=list(self.defects[index]),
            source=self.sources[index],
            provenance=str(self.provenance[index]),
            split=str(self.splits[index]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def resolution(self) -> int:
        return int(self.images.shape[-1])

    @classmethod
    def from_images(cls, items: Iterable[LabeledImage], seed: Optional[int] = None) -> "Dataset":
        items = list(items)
        if not items:
            raise DataError("Cannot build a dataset from zero images")
        return cls(
            images=np.stack([item.pixels for item in items]),
            labels=[item.label for item in items],
            splits=[item.split for item in items],
            provenance=[item.provenance for item in items],
            defects=[item.defects for item in items],
            sources=[item.source for item in items],
            seed=seed,
        )

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64).reshape(-1)
        return Dataset(
            images=self.images[idx],
            labels=self.labels[idx],
            splits=self.splits[idx],
            provenance=self.provenance[idx],
            defects=[self.defects[i] for i in idx],
            sources=[self.sources[i] for i in idx],
            categories=[self.categories[i] for i in idx],
            seed=self.seed,
        )

    def split(self, name: str) -> "Dataset":
        """Images assigned to split ``name``."""
        if name not in SPLIT_NAMES:
            raise DataError(f"Unknown split {name!r}; expected one of {SPLIT_NAMES}")
        return self.subset(np.flatnonzero(self.splits == name))

    def with_splits(self, splits: Sequence[str]) -> "Dataset":
        result = self.subset(np.arange(len(self)))
        result.splits = np.asarray(splits, dtype="<U5")
        result._validate()
        return result

    def concat(self, other: "Dataset") -> "Dataset":
        if len(self) and len(other) and self.resolution != other.resolution:
            raise DataError(
                f"Cannot concatenate resolutions {self.resolution} and {other.resolution}"
            )
        return Dataset(
            images=np.concatenate([self.images, other.images]),
            labels=np.concatenate([self.labels, other.labels]),
            splits=np.concatenate([self.splits, other.splits]),
            provenance=np.concatenate([self.provenance, other.provenance]),
            defects=self.defects + other.defects,
            sources=self.sources + other.sources,
            categories=self.categories + other.categories,
            seed=self.seed,
        )

    def class_counts(self) -> Dict[int, int]:
        return {label: int(np.sum(self.labels == label)) for label in LABEL_NAMES}

    def has_both_classes(self) -> bool:
        return all(count > 0 for count in self.class_counts().values())

    def is_all_real(self) -> bool:
        return bool(np.all(self.provenance == REAL))

    def manifest_rows(self) -> List[Dict[str, str]]:
        return [
            {
                "file": self.sources[i],
                "split": str(self.splits[i]),
                "label": str(int(self.labels[i])),
                "provenance": str(self.provenance[i]),
                "categories": ";".join(self.categories[i]),
            }
            for i in range(len(self))
        ]

    def manifest_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=MANIFEST_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.manifest_rows())
        return buffer.getvalue()

    def save(self, directory: PathLike) -> Path:
        """Write the three dataset files into ``directory``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / DATASET_FILE, "wb") as handle:
            np.savez(
                handle,
                images=self.images,
                labels=self.labels,
                splits=self.splits,
                provenance=self.provenance,
                seed=np.asarray(-1 if self.seed is None else self.seed, dtype=np.int64),
            )
        (directory / MANIFEST_FILE).write_text(self.manifest_csv(), encoding="utf-8")
        defects = [[d.to_dict() for d in image_defects] for image_defects in self.defects]
        (directory / DEFECTS_FILE).write_text(
            json.dumps({"defects": defects}, indent=1, sort_keys=True) + "\n", encoding="utf-8"
        )
        logger.info(f"Saved dataset of {len(self)} images to {directory}")
        return directory

    @classmethod
    def load(cls, directory: PathLike) -> "Dataset":
        directory = Path(directory)
        try:
            with np.load(directory / DATASET_FILE, allow_pickle=False) as archive:
                arrays = {key: archive[key] for key in archive.files}
            with open(directory / MANIFEST_FILE, newline="", encoding="utf-8") as handle:
                rows = list(csv.DictReader(handle))
            defects_doc = json.loads((directory / DEFECTS_FILE).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise DataError(f"Dataset file missing: {exc.filename}") from exc
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"Unreadable dataset in {directory}: {exc}") from exc

        seed = int(arrays["seed"])
        return cls(
            images=arrays["images"],
            labels=arrays["labels"],
            splits=arrays["splits"],
            provenance=arrays["provenance"],
            defects=[[Defect.from_dict(d) for d in item] for item in defects_doc["defects"]],
            sources=[row["file"] for row in rows],
            categories=[[c for c in row["categories"].split(";") if c] for row in rows],
            seed=None if seed < 0 else seed,
        )
