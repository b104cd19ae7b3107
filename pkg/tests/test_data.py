# Standard library imports
import json
import tempfile
import unittest
from pathlib import Path

# Third-party imports
import numpy as np
import pytest
from PIL import Image

# Local imports
from fruit_quality.data import (
    HEALTHY,
    REAL,
    UNHEALTHY,
    Dataset,
    Defect,
    background_mask,
    dequantize,
    generate_toy_dataset,
    ingest_coco,
    png_read,
    png_write,
    preprocess,
    quantize,
    split,
)
from fruit_quality.data.dataset import DATASET_FILE, DEFECTS_FILE, MANIFEST_FILE
from fruit_quality.data.png import to_channels_last
from fruit_quality.data.splits import split_counts
from fruit_quality.exceptions import CocoError, DataError, PngError, SplitError, UnsupportedDepthError


def fruit_photo(size=40, defect=False):
    """Dark backdrop with a light fruit disc; optionally a dark spot in the middle."""
    yy, xx = np.mgrid[:size, :size]
    image = np.zeros((size, size, 3), dtype=np.uint8)
    disc = (yy - size / 2) ** 2 + (xx - size / 2) ** 2 < (size / 3) ** 2
    image[disc] = (240, 210, 60)
    if defect:
        image[size // 2 - 2 : size // 2 + 2, size // 2 - 2 : size // 2 + 2] = (10, 10, 10)
    return image


COCO_FIXTURE = {
    "images": [
        {"id": 1, "file_name": "a.png", "width": 40, "height": 40},
        {"id": 2, "file_name": "b.png", "width": 40, "height": 40},
        {"id": 3, "file_name": "c.png", "width": 40, "height": 40},
        {"id": 4, "file_name": "d.png", "width": 40, "height": 40},
    ],
    "annotations": [
        {"id": 10, "image_id": 1, "category_id": 1, "bbox": [5, 5, 30, 30]},
        {"id": 11, "image_id": 2, "category_id": 2, "bbox": [8, 8, 8, 8]},
        {"id": 12, "image_id": 3, "category_id": 2, "bbox": [4, 4, 6, 6]},
        {"id": 13, "image_id": 3, "category_id": 3, "bbox": [20, 20, 10, 10]},
    ],
    "categories": [
        {"id": 1, "name": "healthy"},
        {"id": 2, "name": "mould"},
        {"id": 3, "name": "gangrene"},
    ],
}


@pytest.mark.unit
class PngTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip(self):
        image = fruit_photo(12)
        np.testing.assert_array_equal(png_read(png_write(image, self.dir / "x.png")), image)

    def test_grayscale_is_replicated(self):
        gray = np.arange(16, dtype=np.uint8).reshape(4, 4)
        out = png_read(png_write(gray, self.dir / "g.png"))
        self.assertEqual(out.shape, (4, 4, 3))
        np.testing.assert_array_equal(out[..., 2], gray)

    def test_sixteen_bit_rejected(self):
        path = self.dir / "deep.png"
        Image.fromarray(np.full((4, 4), 1000, dtype=np.uint16)).save(path, format="PNG")
        with self.assertRaises(UnsupportedDepthError):
            png_read(path)

    def test_not_a_png(self):
        path = self.dir / "fake.png"
        path.write_bytes(b"not an image at all, just some bytes to read")
        with self.assertRaises(PngError):
            png_read(path)

    def test_missing_file(self):
        with self.assertRaises(PngError):
            png_read(self.dir / "missing.png")

    def test_quantize(self):
        np.testing.assert_array_equal(quantize(np.array([-1.0, 0.0, 1.0, 2.0])), [0, 128, 255, 255])
        np.testing.assert_allclose(dequantize(np.array([0, 255], dtype=np.uint8)), [-1.0, 1.0])

    def test_float_image_written_channels_last(self):
        pixels = np.zeros((3, 5, 5), dtype=np.float32)
        out = png_read(png_write(pixels, self.dir / "f.png", channels_first=True))
        self.assertEqual(out.shape, (5, 5, 3))
        self.assertTrue(np.all(out == 128))

    def test_channels_first_with_three_or_four_columns(self):
        for width in (3, 4):
            pixels = np.stack([np.full((5, width), v, dtype=np.float32) for v in (1.0, -1.0, 0.0)])
            layout = to_channels_last(pixels)
            self.assertEqual(layout.shape, (5, width, 3))
            out = png_read(png_write(pixels, self.dir / f"w{width}.png", channels_first=True))
            self.assertEqual(out.shape, (5, width, 3))
            np.testing.assert_array_equal(out[2, 1], [255, 0, 128])

    def test_channels_last_needs_three_dimensions(self):
        with self.assertRaises(PngError):
            to_channels_last(np.zeros((4, 4)))


@pytest.mark.unit
class PreprocessTestCase(unittest.TestCase):
    def test_backdrop_becomes_white(self):
        out = preprocess(fruit_photo(24), 24)
        self.assertEqual(out.shape, (3, 24, 24))
        self.assertEqual(out.dtype, np.float32)
        self.assertTrue(np.all(out[:, 0, 0] == 1.0))
        self.assertTrue(np.all(out[:, -1, -1] == 1.0))

    def test_dark_spot_inside_fruit_is_kept(self):
        rgb = fruit_photo(24, defect=True).astype(np.float64) / 255.0
        mask = background_mask(rgb)
        self.assertTrue(mask[0, 0])
        self.assertFalse(mask[12, 12])
        out = preprocess(fruit_photo(24, defect=True), 24)
        self.assertLess(out[0, 12, 12], -0.5)

    def test_resize(self):
        out = preprocess(fruit_photo(40), 16)
        self.assertEqual(out.shape, (3, 16, 16))
        self.assertTrue(np.all((out >= -1.0) & (out <= 1.0)))

    def test_invalid_arguments(self):
        with self.assertRaises(DataError):
            preprocess(np.zeros((0, 0, 3), dtype=np.uint8), 8)
        with self.assertRaises(DataError):
            preprocess(fruit_photo(8), 8, bg_threshold=2.0)
        with self.assertRaises(DataError):
            preprocess(np.zeros((8, 8), dtype=np.uint8), 8)


@pytest.mark.unit
class ToyDatasetTestCase(unittest.TestCase):
    def test_deterministic_for_seed(self):
        first = generate_toy_dataset(12, 16, seed=7)
        second = generate_toy_dataset(12, 16, seed=7, workers=3)
        np.testing.assert_array_equal(first.images, second.images)
        np.testing.assert_array_equal(first.labels, second.labels)
        self.assertEqual(first.manifest_csv(), second.manifest_csv())

    def test_seed_changes_images(self):
        first = generate_toy_dataset(6, 16, seed=1)
        second = generate_toy_dataset(6, 16, seed=2)
        self.assertFalse(np.array_equal(first.images, second.images))

    def test_label_balance_and_defects(self):
        dataset = generate_toy_dataset(20, 16, seed=3, unhealthy_fraction=0.25)
        self.assertEqual(dataset.class_counts(), {HEALTHY: 15, UNHEALTHY: 5})
        for item in dataset:
            if item.label == UNHEALTHY:
                self.assertIn(len(item.defects), (1, 2))
                for defect in item.defects:
                    self.assertLessEqual(defect.box[2], 16)
                    self.assertLessEqual(defect.box[3], 16)
            else:
                self.assertEqual(item.defects, [])

    def test_values_and_provenance(self):
        dataset = generate_toy_dataset(4, 16, seed=0)
        self.assertTrue(np.all((dataset.images >= -1.0) & (dataset.images <= 1.0)))
        self.assertTrue(dataset.is_all_real())
        self.assertEqual(set(dataset.splits.tolist()), {"train"})

    def test_invalid_arguments(self):
        with self.assertRaises(DataError):
            generate_toy_dataset(1, 16, seed=0)
        with self.assertRaises(DataError):
            generate_toy_dataset(4, 8, seed=0)
        with self.assertRaises(DataError):
            generate_toy_dataset(4, 16, seed=0, unhealthy_fraction=1.0)


@pytest.mark.unit
class SplitTestCase(unittest.TestCase):
    def setUp(self):
        self.dataset = generate_toy_dataset(40, 16, seed=5)

    def test_counts(self):
        self.assertEqual(split_counts(10, (0.8, 0.1, 0.1)), (8, 1, 1))
        self.assertEqual(split_counts(25, (0.8, 0.1, 0.1)), (20, 3, 2))

    def test_stratified(self):
        result = split(self.dataset, (0.5, 0.25, 0.25), seed=1)
        for name in ("train", "val", "test"):
            counts = result.split(name).class_counts()
            self.assertEqual(counts[HEALTHY], counts[UNHEALTHY])
        self.assertEqual(len(result.split("train")), 20)

    def test_deterministic(self):
        first = split(self.dataset, seed=4)
        second = split(self.dataset, seed=4)
        np.testing.assert_array_equal(first.splits, second.splits)
        self.assertFalse(np.array_equal(first.splits, split(self.dataset, seed=5).splits))

    def test_invalid_fractions(self):
        with self.assertRaises(SplitError):
            split(self.dataset, (0.5, 0.3, 0.3))
        with self.assertRaises(SplitError):
            split(self.dataset, (0.9, 0.1))

    def test_too_few_images_for_a_split(self):
        with self.assertRaises(SplitError):
            split(generate_toy_dataset(4, 16, seed=0), (0.8, 0.1, 0.1))


@pytest.mark.unit
class DatasetTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_save_load_round_trip(self):
        dataset = split(generate_toy_dataset(20, 16, seed=9), seed=9)
        dataset.save(self.dir)
        for name in (DATASET_FILE, MANIFEST_FILE, DEFECTS_FILE):
            self.assertTrue((self.dir / name).is_file())
        loaded = Dataset.load(self.dir)
        self.assertEqual(loaded.images.tobytes(), dataset.images.tobytes())
        np.testing.assert_array_equal(loaded.labels, dataset.labels)
        np.testing.assert_array_equal(loaded.splits, dataset.splits)
        self.assertEqual(loaded.defects, dataset.defects)
        self.assertEqual(loaded.categories, dataset.categories)
        self.assertEqual(loaded.seed, 9)

    def test_load_missing(self):
        with self.assertRaises(DataError):
            Dataset.load(self.dir / "nothing")

    def test_healthy_image_with_defect_rejected(self):
        with self.assertRaises(DataError):
            Dataset(
                images=np.zeros((1, 3, 16, 16)),
                labels=[HEALTHY],
                defects=[[Defect("mould", (1, 1, 3, 3))]],
            )

    def test_defect_box_must_fit(self):
        with self.assertRaises(DataError):
            Dataset(images=np.zeros((1, 3, 16, 16)), labels=[UNHEALTHY], defects=[[Defect("mould", (1, 1, 20, 3))]])

    def test_degenerate_box(self):
        with self.assertRaises(DataError):
            Defect("mould", (3, 3, 3, 5))

    def test_dilated_box_is_clipped(self):
        self.assertEqual(Defect("gangrene", (1, 2, 4, 6)).dilated(1.6, 6), (0, 0, 6, 6))

    def test_concat_resolution_mismatch(self):
        small = Dataset(images=np.zeros((1, 3, 16, 16)), labels=[HEALTHY])
        large = Dataset(images=np.zeros((1, 3, 32, 32)), labels=[HEALTHY])
        with self.assertRaises(DataError):
            small.concat(large)

    def test_pixel_range_checked(self):
        with self.assertRaises(DataError):
            Dataset(images=np.full((1, 3, 16, 16), 1.5), labels=[HEALTHY])


@pytest.mark.integration
class CocoIngestTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        for name, defect in (("a.png", False), ("b.png", True), ("c.png", True), ("d.png", False)):
            png_write(fruit_photo(40, defect), self.dir / name)
        self.annotations = self.dir / "annotations.json"
        self.annotations.write_text(json.dumps(COCO_FIXTURE), encoding="utf-8")

    def tearDown(self):
        self.tmp.cleanup()

    def test_binary_labels(self):
        dataset = ingest_coco(self.dir, self.annotations, target_resolution=16)
        self.assertEqual(dataset.labels.tolist(), [HEALTHY, UNHEALTHY, UNHEALTHY, HEALTHY])
        self.assertEqual(dataset.sources, ["a.png", "b.png", "c.png", "d.png"])
        self.assertEqual(dataset.categories, [[], ["mould"], ["gangrene", "mould"], []])
        self.assertTrue(dataset.is_all_real())
        self.assertEqual(set(dataset.provenance.tolist()), {REAL})

    def test_manifest(self):
        dataset = ingest_coco(self.dir, self.annotations, target_resolution=16)
        self.assertEqual(
            dataset.manifest_csv(),
            "file,split,label,provenance,categories\n"
            "a.png,train,0,real,\n"
            "b.png,train,1,real,mould\n"
            "c.png,train,1,real,gangrene;mould\n"
            "d.png,train,0,real,\n",
        )

    def test_defect_boxes_scaled(self):
        dataset = ingest_coco(self.dir, self.annotations, target_resolution=16)
        self.assertEqual(dataset.defects[1], [Defect("mould", (3, 3, 6, 6))])
        self.assertEqual(len(dataset.defects[2]), 2)
        self.assertEqual(dataset.defects[0], [])

    def test_workers_do_not_change_result(self):
        serial = ingest_coco(self.dir, self.annotations, target_resolution=16)
        parallel = ingest_coco(self.dir, self.annotations, target_resolution=16, workers=4)
        self.assertEqual(serial.images.tobytes(), parallel.images.tobytes())

    def test_unmapped_category(self):
        document = dict(COCO_FIXTURE, categories=COCO_FIXTURE["categories"] + [{"id": 4, "name": "bruise"}])
        self.annotations.write_text(json.dumps(document), encoding="utf-8")
        with self.assertRaisesRegex(CocoError, "bruise"):
            ingest_coco(self.dir, self.annotations, target_resolution=16)

    def test_annotation_without_image_id(self):
        annotations = [dict(a) for a in COCO_FIXTURE["annotations"]]
        del annotations[2]["image_id"]
        self.annotations.write_text(json.dumps(dict(COCO_FIXTURE, annotations=annotations)), encoding="utf-8")
        with self.assertRaisesRegex(CocoError, "Annotation 2 "):
            ingest_coco(self.dir, self.annotations, target_resolution=16)

    def test_annotation_with_non_integer_category(self):
        annotations = [dict(a) for a in COCO_FIXTURE["annotations"]]
        annotations[1]["category_id"] = "mould"
        self.annotations.write_text(json.dumps(dict(COCO_FIXTURE, annotations=annotations)), encoding="utf-8")
        with self.assertRaisesRegex(CocoError, "Annotation 1 "):
            ingest_coco(self.dir, self.annotations, target_resolution=16)

    def test_annotation_with_unknown_image(self):
        annotations = [dict(a) for a in COCO_FIXTURE["annotations"]]
        annotations[0]["image_id"] = 99
        self.annotations.write_text(json.dumps(dict(COCO_FIXTURE, annotations=annotations)), encoding="utf-8")
        with self.assertRaisesRegex(CocoError, "Annotation 0 references unknown image id 99"):
            ingest_coco(self.dir, self.annotations, target_resolution=16)

    def test_custom_category_map(self):
        category_map = {"healthy": None, "mould": None, "gangrene": "gangrene"}
        dataset = ingest_coco(self.dir, self.annotations, category_map=category_map, target_resolution=16)
        self.assertEqual(dataset.labels.tolist(), [HEALTHY, HEALTHY, UNHEALTHY, HEALTHY])

    def test_missing_image(self):
        (self.dir / "d.png").unlink()
        with self.assertRaisesRegex(CocoError, "d.png"):
            ingest_coco(self.dir, self.annotations, target_resolution=16)

    def test_invalid_json(self):
        self.annotations.write_text("{not json", encoding="utf-8")
        with self.assertRaises(CocoError):
            ingest_coco(self.dir, self.annotations, target_resolution=16)

    def test_unknown_image_reference(self):
        document = dict(
            COCO_FIXTURE,
            annotations=COCO_FIXTURE["annotations"] + [{"id": 14, "image_id": 9, "category_id": 2}],
        )
        self.annotations.write_text(json.dumps(document), encoding="utf-8")
        with self.assertRaises(CocoError):
            ingest_coco(self.dir, self.annotations, target_resolution=16)
