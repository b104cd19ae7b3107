# Standard library imports
import tempfile
import unittest
from collections import OrderedDict
from pathlib import Path

# Third-party imports
import numpy as np
import pytest

# Local imports
from fruit_quality.classify import ClassifierConfig
from fruit_quality.data import SYNTHETIC, generate_toy_dataset, split
from fruit_quality.exceptions import DataError, PruningError
from fruit_quality.nn import ClassifierNet, load_checkpoint, params_equal
from fruit_quality.prune import (
    PruneConfig,
    PruningRow,
    PruningSchedule,
    PruningTable,
    apply_magnitude_mask,
    apply_masks,
    finetune,
    magnitude_masks,
    mask_sparsity,
    merge_pruning_tables,
    prune_finetune,
    pruning_sweep,
    sparsity_at,
    weight_sparsity,
)
from fruit_quality.tensor import Tensor


def _params(**arrays):
    return OrderedDict(
        (name.replace("__", "."), Tensor(np.asarray(values, dtype=np.float64))) for name, values in arrays.items()
    )


def _model(seed=1):
    return ClassifierNet(16, 4, filters=(2, 3, 4), seed=seed)


@pytest.mark.unit
class ScheduleTestCase(unittest.TestCase):
    def test_midpoint(self):
        sched = PruningSchedule(final_sparsity=0.5, initial_sparsity=0.0, epochs=20, power=3)
        self.assertAlmostEqual(sparsity_at(10, sched), 0.4375, places=12)

    def test_endpoints(self):
        sched = PruningSchedule(final_sparsity=0.9, initial_sparsity=0.1, epochs=20, power=3)
        self.assertEqual(sparsity_at(0, sched), 0.1)
        self.assertEqual(sparsity_at(20, sched), 0.9)

    def test_formula_and_monotonicity_on_grid(self):
        sched = PruningSchedule(final_sparsity=0.8, initial_sparsity=0.2, epochs=20, power=3)
        grid = np.linspace(0, 20, 1000)
        values = [sparsity_at(t, sched) for t in grid]
        expected = 0.8 + (0.2 - 0.8) * (1 - grid / 20) ** 3
        np.testing.assert_allclose(values, expected, atol=1e-12)
        self.assertTrue(np.all(np.diff(values) >= 0))

    def test_out_of_range_epoch(self):
        with self.assertRaises(PruningError):
            sparsity_at(21, PruningSchedule())
        with self.assertRaises(PruningError):
            sparsity_at(-1, PruningSchedule())

    def test_invalid_schedules(self):
        for kwargs in (
            dict(final_sparsity=1.0),
            dict(final_sparsity=0.3, initial_sparsity=0.5),
            dict(epochs=0),
            dict(power=0.0),
            dict(cadence="step"),
        ):
            with self.subTest(**kwargs), self.assertRaises(PruningError):
                PruningSchedule(**kwargs)


@pytest.mark.unit
class MaskTestCase(unittest.TestCase):
    def test_zero_target_keeps_everything(self):
        masks = magnitude_masks(_params(a__weight=[[0.1, -2.0], [3.0, 0.0]]), 0.0)
        self.assertTrue(masks["a.weight"].all())

    def test_smallest_magnitudes_pruned(self):
        masks = magnitude_masks(_params(a__weight=[0.5, -0.1, 3.0, -2.0], a__bias=[0.0, 0.0]), 0.5)
        self.assertEqual(masks["a.weight"].tolist(), [False, False, True, True])
        self.assertNotIn("a.bias", masks)

    def test_ties_broken_by_index(self):
        masks = magnitude_masks(_params(a__weight=[1.0, 1.0, 1.0, 1.0]), 0.5)
        self.assertEqual(masks["a.weight"].tolist(), [False, False, True, True])

    def test_count_rounds_half_up(self):
        masks = magnitude_masks(_params(a__weight=[1.0, 2.0, 3.0]), 0.5)
        self.assertEqual(int(np.sum(~masks["a.weight"])), 2)

    def test_previous_mask_is_respected(self):
        params = _params(a__weight=[1.0, 2.0, 3.0, 10.0])
        previous = {"a.weight": np.array([True, True, True, False])}
        masks = magnitude_masks(params, 0.5, previous=previous)
        self.assertEqual(masks["a.weight"].tolist(), [False, True, True, False])

    def test_masks_only_grow(self):
        rng = np.random.default_rng(0)
        params = _params(a__weight=rng.normal(size=(6, 6)), b__weight=rng.normal(size=(10,)))
        masks = None
        for target in (0.1, 0.3, 0.3, 0.6, 0.9):
            current = magnitude_masks(params, target, previous=masks)
            if masks is not None:
                for name in current:
                    self.assertFalse(np.any(current[name] & ~masks[name]))
            masks = current
            params = apply_masks(params, masks)
            # Perturb the survivors so later rankings differ.
            params = OrderedDict(
                (name, Tensor(t.data + 0.01 * rng.normal(size=t.shape) * (t.data != 0))) for name, t in params.items()
            )

    def test_global_scope(self):
        params = _params(a__weight=[0.1, 0.2], b__weight=[5.0, 6.0, 0.3, 7.0])
        masks = magnitude_masks(params, 0.5, scope="global")
        self.assertEqual(masks["a.weight"].tolist(), [False, False])
        self.assertEqual(masks["b.weight"].tolist(), [True, True, False, True])
        self.assertAlmostEqual(mask_sparsity(masks), 0.5)

    def test_apply_masks_zeroes_exactly(self):
        params = _params(a__weight=[1.0, -2.0, 3.0], a__bias=[1.0])
        masked = apply_masks(params, {"a.weight": np.array([True, False, True])})
        self.assertEqual(masked["a.weight"].data.tolist(), [1.0, 0.0, 3.0])
        self.assertIs(masked["a.bias"], params["a.bias"])
        self.assertAlmostEqual(weight_sparsity(masked), 1 / 3)

    def test_invalid_arguments(self):
        params = _params(a__weight=[1.0, 2.0])
        with self.assertRaises(PruningError):
            magnitude_masks(params, 1.0)
        with self.assertRaises(PruningError):
            magnitude_masks(params, 0.5, scope="layer")
        with self.assertRaises(PruningError):
            magnitude_masks(_params(a__bias=[1.0]), 0.5)

    def test_masked_model(self):
        masked = apply_magnitude_mask(_model(), 0.5)
        self.assertTrue(masked.masked_weights_are_zero())
        self.assertAlmostEqual(masked.weight_sparsity(), 0.5, delta=0.005)
        self.assertAlmostEqual(masked.size_percent(), 100.0 * (1 - masked.weight_sparsity()))
        self.assertEqual(masked.metadata()["scope"], "tensor")


@pytest.mark.unit
class PruneConfigTestCase(unittest.TestCase):
    def test_schedule_from_config(self):
        sched = PruneConfig(targets=(0.5,), epochs=4, initial_sparsity=0.2).schedule(0.1)
        self.assertEqual((sched.final_sparsity, sched.initial_sparsity, sched.epochs), (0.1, 0.1, 4))

    def test_invalid_config(self):
        with self.assertRaises(PruningError):
            PruneConfig(targets=(0.5, 1.0))
        with self.assertRaises(PruningError):
            PruneConfig(scope="layer")
        with self.assertRaises(PruningError):
            PruneConfig(epochs=0)


@pytest.mark.unit
class PruningTableTestCase(unittest.TestCase):
    def setUp(self):
        self.vanilla = PruningTable(
            "vanilla",
            [PruningRow(0.1, 0.1, 90.0, 0.8), PruningRow(0.5, 0.5, 50.0, 0.75)],
        )
        self.augmented = PruningTable("augmented", [PruningRow(0.5, 0.5, 50.0, 0.7), PruningRow(0.9, 0.9, 10.0, 0.5)])

    def test_csv_round_trip(self):
        self.assertEqual(
            self.vanilla.to_csv(),
            "size_percent,final_sparsity,accuracy,achieved_sparsity\n"
            "90.00,0.1000,0.800000,0.100000\n"
            "50.00,0.5000,0.750000,0.500000\n",
        )
        with tempfile.TemporaryDirectory() as tmp:
            self.assertEqual(PruningTable.read_csv(self.vanilla.write_csv(Path(tmp) / "p.csv")), self.vanilla)

    def test_merge(self):
        self.assertEqual(
            merge_pruning_tables(self.vanilla, self.augmented),
            "size_percent,final_sparsity,accuracy_vanilla,accuracy_augmented\n"
            "90.00,0.1000,0.800000,\n"
            "50.00,0.5000,0.750000,0.700000\n"
            "10.00,0.9000,,0.500000\n",
        )

    def test_merge_single_variant(self):
        self.assertEqual(merge_pruning_tables(augmented=self.augmented).count("\n"), 3)

    def test_read_rejects_other_tables(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "x.csv"
            path.write_text("a,b\n1,2\n", encoding="utf-8")
            with self.assertRaises(DataError):
                PruningTable.read_csv(path)


@pytest.mark.integration
class PruneFinetuneTestCase(unittest.TestCase):
    def setUp(self):
        data = split(generate_toy_dataset(24, 16, seed=2), seed=2)
        self.train, self.val = data.split("train"), data.split("val")
        self.cfg = ClassifierConfig(batch_size=8)

    def test_reaches_final_sparsity(self):
        model = _model()
        sched = PruningSchedule(final_sparsity=0.5, epochs=3)
        masked, accuracy = prune_finetune(model, self.train, self.val, sched, seed=1, cfg=self.cfg)
        self.assertAlmostEqual(masked.weight_sparsity(), 0.5, delta=0.005)
        self.assertTrue(masked.masked_weights_are_zero())
        self.assertEqual([h.epoch for h in masked.history], [1, 2, 3])
        self.assertEqual([h.target_sparsity for h in masked.history], [sparsity_at(t, sched) for t in (1, 2, 3)])
        self.assertEqual(accuracy, masked.history[-1].val_accuracy)
        self.assertTrue(params_equal(model.params, _model().params))

    def test_zero_sparsity_matches_plain_finetune(self):
        masked, pruned_acc = prune_finetune(
            _model(), self.train, self.val, PruningSchedule(final_sparsity=0.0, epochs=2), seed=4, cfg=self.cfg
        )
        tuned, tuned_acc = finetune(_model(), self.train, self.val, epochs=2, seed=4, cfg=self.cfg)
        self.assertTrue(params_equal(masked.params, tuned.params))
        self.assertEqual(pruned_acc, tuned_acc)

    def test_synthetic_validation_rejected(self):
        val = self.val.with_splits(self.val.splits)
        val.provenance[:] = SYNTHETIC
        with self.assertRaises(DataError):
            prune_finetune(_model(), self.train, val, PruningSchedule(epochs=1), seed=1, cfg=self.cfg)

    def test_sweep_outputs(self):
        prune_cfg = PruneConfig(targets=(0.5, 0.0), epochs=1)
        with tempfile.TemporaryDirectory() as tmp:
            table = pruning_sweep(
                _model(), self.train, self.val, prune_cfg.targets, 1, prune_cfg, self.cfg, out_dir=tmp
            )
            self.assertEqual([row.final_sparsity for row in table.rows], [0.0, 0.5])
            self.assertTrue((Path(tmp) / "logs" / "pruning_vanilla.csv").is_file())
            sparse = load_checkpoint(Path(tmp) / "checkpoints" / "pruned_vanilla_s050.fqck")
            self.assertAlmostEqual(weight_sparsity(sparse), 0.5, delta=0.005)
        self.assertEqual(table.rows[0].size_percent, 100.0)
        self.assertIsNotNone(table.baseline_accuracy)
        self.assertTrue(table.metadata["train_all_real"])

    def test_sweep_workers_do_not_change_rows(self):
        prune_cfg = PruneConfig(targets=(0.3, 0.6), epochs=1, sparse_checkpoints=False)
        serial = pruning_sweep(_model(), self.train, self.val, prune_cfg.targets, 1, prune_cfg, self.cfg)
        parallel = pruning_sweep(_model(), self.train, self.val, prune_cfg.targets, 1, prune_cfg, self.cfg, workers=2)
        self.assertEqual(serial.rows, parallel.rows)
