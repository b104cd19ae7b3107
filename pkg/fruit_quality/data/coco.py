"""
COCO annotation ingestion.

Only the subset needed for binary fruit labels is read: ``images`` (id, file_name,
width, height), ``annotations`` (image_id, category_id, optional bbox) and
``categories`` (id, name). Each annotation describes one defect, so an image
with several defect annotations collapses to a single unhealthy label.
"""

# Standard library imports
import json
import logging
import os
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

# Local imports
from ..exceptions import CocoError, PngError
from .dataset import DEFECT_KINDS, HEALTHY, REAL, UNHEALTHY, Dataset, Defect
from .png import read_image
from .preprocess import DEFAULT_BG_THRESHOLD, preprocess

logger = logging.getLogger(__name__)

# Category name -> defect kind, or None for annotations that do not make a fruit unhealthy
DEFAULT_CATEGORY_MAP: Dict[str, Optional[str]] = {
    "mould": "mould",
    "mold": "mould",
    "gangrene": "gangrene",
    "dark_style": "dark_style",
    "dark_style_remains": "dark_style",
    "healthy": None,
    "pedicel": None,
    "image_quality": None,
}

PathLike = Union[str, os.PathLike]


def _read_annotations(annotation_file: Path) -> Dict:
    try:
        document = json.loads(annotation_file.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise CocoError(f"Annotation file not found: {annotation_file}") from exc
    except json.JSONDecodeError as exc:
        raise CocoError(f"{annotation_file}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(document, dict):
        raise CocoError(f"{annotation_file}: top level must be an object")
    for key in ("images", "annotations", "categories"):
        if not isinstance(document.get(key), list):
            raise CocoError(f"{annotation_file}: missing or non-list '{key}'")
    return document


def resolve_categories(
    categories: List[Dict], category_map: Mapping[str, Optional[str]]
) -> Dict[int, Optional[str]]:
    """
    Map category ids to defect kinds.

    Raises:
        CocoError: listing every category name without a mapping
    """
    resolved: Dict[int, Optional[str]] = {}
    unknown = []
    for category in categories:
        try:
            cat_id, name = int(category["id"]), str(category["name"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CocoError(f"Malformed category entry {category!r}") from exc
        if name not in category_map:
            unknown.append(name)
            continue
        kind = category_map[name]
        if kind is not None and kind not in DEFECT_KINDS:
            raise CocoError(f"Category {name!r} maps to unknown defect kind {kind!r}")
        resolved[cat_id] = kind
    if unknown:
        raise CocoError(f"Unmapped categories: {', '.join(sorted(set(unknown)))}")
    return resolved


def _annotation_ids(index: int, annotation: Any) -> Tuple[int, int]:
    """(image_id, category_id) of the annotation at ``index``."""
    try:
        return int(annotation["image_id"]), int(annotation["category_id"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CocoError(f"Annotation {index} has a missing or non-integer image_id or category_id") from exc


def _image_id(index: int, image: Any) -> int:
    try:
        return int(image["id"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CocoError(f"Image entry {index} has a missing or non-integer id") from exc


def label_images(document: Dict, category_kinds: Mapping[int, Optional[str]]) -> Dict[int, List[str]]:
    """Image id -> sorted list of mapped defect kinds found in its annotations."""
    kinds: Dict[int, set] = defaultdict(set)
    image_ids = {_image_id(index, image) for index, image in enumerate(document["images"])}
    for index, annotation in enumerate(document["annotations"]):
        image_id, category_id = _annotation_ids(index, annotation)
        if image_id not in image_ids:
            raise CocoError(f"Annotation {index} references unknown image id {image_id}")
        if category_id not in category_kinds:
            raise CocoError(f"Annotation {index} references unknown category id {category_id}")
        kind = category_kinds[category_id]
        if kind is not None:
            kinds[image_id].add(kind)
    return {image_id: sorted(kinds.get(image_id, ())) for image_id in sorted(image_ids)}


def _scaled_boxes(
    annotations: List[Dict],
    category_kinds: Mapping[int, Optional[str]],
    width: int,
    height: int,
    resolution: int,
) -> List[Defect]:
    defects = []
    for annotation in annotations:
        kind = category_kinds[int(annotation["category_id"])]
        bbox = annotation.get("bbox")
        if kind is None or not bbox or width <= 0 or height <= 0:
            continue
        try:
            x, y, w, h = (float(v) for v in bbox)
        except (TypeError, ValueError) as exc:
            raise CocoError(
                f"Annotation for image {annotation['image_id']} has a malformed bbox {bbox!r}"
            ) from exc
        sx, sy = resolution / width, resolution / height
        x0 = min(max(int(x * sx), 0), resolution - 1)
        y0 = min(max(int(y * sy), 0), resolution - 1)
        x1 = min(max(int(round((x + w) * sx)), x0 + 1), resolution)
        y1 = min(max(int(round((y + h) * sy)), y0 + 1), resolution)
        defects.append(Defect(kind, (x0, y0, x1, y1)))
    return defects


def ingest_coco(
    image_dir: PathLike,
    annotation_file: PathLike,
    category_map: Optional[Mapping[str, Optional[str]]] = None,
    target_resolution: int = 256,
    bg_threshold: float = DEFAULT_BG_THRESHOLD,
    workers: Optional[int] = None,
) -> Dataset:
    """
    Build a binary-labelled dataset from a COCO annotation file.

    An image is unhealthy iff at least one of its annotations maps to a defect kind.

    Args:
        image_dir: Directory the ``file_name`` entries are relative to
        annotation_file: COCO JSON path
        category_map: Category name -> defect kind or None; defaults to DEFAULT_CATEGORY_MAP
        target_resolution: Side length after preprocessing
        bg_threshold: Backdrop luminance cut passed to :func:`preprocess`
        workers: Image loading threads; results do not depend on it

    Raises:
        CocoError: malformed JSON, unmapped categories, or a missing image file
    """
    image_dir = Path(image_dir)
    annotation_file = Path(annotation_file)
    document = _read_annotations(annotation_file)
    category_kinds = resolve_categories(
        document["categories"], DEFAULT_CATEGORY_MAP if category_map is None else category_map
    )
    kinds_by_image = label_images(document, category_kinds)

    annotations_by_image: Dict[int, List[Dict]] = defaultdict(list)
    for annotation in document["annotations"]:
        annotations_by_image[int(annotation["image_id"])].append(annotation)
    entries = sorted(document["images"], key=lambda image: int(image["id"]))
    if not entries:
        raise CocoError(f"{annotation_file}: no images listed")

    for entry in entries:
        if not isinstance(entry.get("file_name"), str):
            raise CocoError(f"Image {entry['id']} has no file_name")
    missing = [e["file_name"] for e in entries if not (image_dir / e["file_name"]).is_file()]
    if missing:
        raise CocoError(f"Missing image files in {image_dir}: {', '.join(missing)}")

    def load(entry: Dict):
        path = image_dir / entry["file_name"]
        try:
            return preprocess(read_image(path), target_resolution, bg_threshold)
        except PngError as exc:
            raise CocoError(f"Cannot load {path}: {exc}") from exc

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pixels = list(pool.map(load, entries))
    else:
        pixels = [load(entry) for entry in entries]

    labels, defects, categories = [], [], []
    for entry in entries:
        image_id = int(entry["id"])
        kinds = kinds_by_image[image_id]
        unhealthy = bool(kinds)
        labels.append(UNHEALTHY if unhealthy else HEALTHY)
        categories.append(kinds)
        boxes = _scaled_boxes(
            annotations_by_image[image_id],
            category_kinds,
            int(entry.get("width", 0) or 0),
            int(entry.get("height", 0) or 0),
            target_resolution,
        )
        defects.append(boxes if unhealthy else [])

    dataset = Dataset(
        images=pixels,
        labels=labels,
        provenance=[REAL] * len(entries),
        defects=defects,
        sources=[str(entry["file_name"]) for entry in entries],
        categories=categories,
    )
    counts = dataset.class_counts()
    logger.info(
        f"Ingested {len(dataset)} images from {annotation_file} "
        f"({counts[HEALTHY]} healthy, {counts[UNHEALTHY]} unhealthy)"
    )
    return dataset
