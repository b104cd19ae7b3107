# Standard library imports
import tempfile
import unittest
from pathlib import Path

# Third-party imports
import numpy as np
import pytest

# Local imports
from fruit_quality.cgan import (
    CganConfig,
    LossLog,
    LossRow,
    checkpoint_epochs,
    emit_comparison_grid,
    grid_array,
    sample,
    train_cgan,
)
from fruit_quality.cgan.trainer import LOSS_LOG_FILE
from fruit_quality.data import HEALTHY, generate_toy_dataset, png_read
from fruit_quality.exceptions import ConfigError, DataError, TrainingError
from fruit_quality.nn import GeneratorNet, build_generator, load_checkpoint, params_equal


def _tiny_config(**overrides):
    values = dict(
        epochs=2,
        batch_size=4,
        latent_dim=8,
        embed_dim=4,
        resolution=16,
        checkpoint_interval=1,
        seed=3,
        samples_per_class=2,
        grid_columns=2,
    )
    values.update(overrides)
    return CganConfig(**values)


@pytest.mark.unit
class LossLogTestCase(unittest.TestCase):
    def test_rows_must_be_consecutive(self):
        log = LossLog()
        log.append(LossRow(1, 1.0, 0.5, 0.5))
        with self.assertRaises(TrainingError):
            log.append(LossRow(3, 1.0, 0.5, 0.5))

    def test_non_finite_row_rejected(self):
        with self.assertRaises(TrainingError):
            LossLog().append(LossRow(1, float("inf"), 0.5, 0.5))

    def test_lowest_generator_loss_prefers_earliest(self):
        log = LossLog()
        for epoch, g in enumerate((2.0, 0.7, 0.9, 0.7), start=1):
            log.append(LossRow(epoch, g, 0.1, 0.1))
        self.assertEqual(log.lowest_generator_loss(), (2, 0.7))
        self.assertEqual(log.final().epoch, 4)

    def test_empty_log(self):
        with self.assertRaises(TrainingError):
            LossLog().final()

    def test_csv_round_trip(self):
        log = LossLog()
        log.append(LossRow(1, 1.25, 0.5, 0.75))
        log.append(LossRow(2, 1.0, 0.25, 0.125))
        self.assertTrue(log.to_csv().startswith("epoch,g_loss,d_loss_real,d_loss_fake\n1,1.25,"))
        with tempfile.TemporaryDirectory() as tmp:
            path = log.write_csv(Path(tmp) / "logs" / LOSS_LOG_FILE)
            self.assertEqual(LossLog.read_csv(path).rows, log.rows)


@pytest.mark.unit
class CheckpointScheduleTestCase(unittest.TestCase):
    def test_interval_plus_final_epoch(self):
        self.assertEqual(checkpoint_epochs(_tiny_config(epochs=7, checkpoint_interval=3)), [3, 6, 7])

    def test_final_epoch_not_repeated(self):
        self.assertEqual(checkpoint_epochs(_tiny_config(epochs=6, checkpoint_interval=3)), [3, 6])

    def test_interval_longer_than_run(self):
        self.assertEqual(checkpoint_epochs(_tiny_config(epochs=4, checkpoint_interval=50)), [4])

    def test_invalid_config(self):
        with self.assertRaises(ConfigError):
            _tiny_config(epochs=0)


@pytest.mark.unit
class SamplingTestCase(unittest.TestCase):
    def setUp(self):
        self.gen = GeneratorNet(16, latent_dim=8, embed_dim=4, seed=11)

    def test_same_seed_same_images(self):
        first = sample(self.gen, [0, 1, 1], seed=5)
        np.testing.assert_array_equal(first, sample(self.gen, [0, 1, 1], seed=5))
        self.assertEqual(first.shape, (3, 3, 16, 16))
        self.assertEqual(first.dtype, np.float32)

    def test_batching_does_not_change_images(self):
        labels = [0, 1, 0, 1, 1]
        np.testing.assert_allclose(
            sample(self.gen, labels, seed=2, batch_size=2), sample(self.gen, labels, seed=2), atol=1e-6
        )

    def test_invalid_labels(self):
        with self.assertRaises(DataError):
            sample(self.gen, [0, 2], seed=0)

    def test_no_labels(self):
        self.assertEqual(sample(self.gen, [], seed=0).shape, (0, 3, 16, 16))

    def test_grid_layout(self):
        images = np.zeros((5, 3, 16, 16), dtype=np.float32)
        grid = grid_array(images, cols=3)
        self.assertEqual(grid.shape, (2 * 16 + 6, 3 * 16 + 8, 3))
        self.assertTrue(np.all(grid[0] == 255))
        self.assertTrue(np.all(grid[2:18, 2:18] == 128))
        # Sixth slot of the second row stays background.
        self.assertTrue(np.all(grid[20:36, 38:54] == 255))

    def test_grid_rejects_empty_batch(self):
        with self.assertRaises(DataError):
            grid_array(np.zeros((0, 3, 16, 16)), cols=2)

    def test_comparison_grid(self):
        real = np.full((4, 3, 16, 16), -1.0, dtype=np.float32)
        synthetic = np.full((2, 3, 16, 16), 1.0, dtype=np.float32)
        with tempfile.TemporaryDirectory() as tmp:
            image = png_read(emit_comparison_grid(real, synthetic, 2, Path(tmp) / "cmp.png"))
        self.assertEqual(image.shape, (2 * 16 + 6, 2 * (2 * 16 + 6) - 2, 3))
        self.assertTrue(np.all(image[2:18, 2:18] == 0))


@pytest.mark.integration
class TrainCganTestCase(unittest.TestCase):
    def setUp(self):
        self.data = generate_toy_dataset(8, 16, seed=1)
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_loss_log_and_update_counts(self):
        result = train_cgan(self.data, _tiny_config())
        self.assertEqual([row.epoch for row in result.loss_log.rows], [1, 2])
        self.assertEqual(result.discriminator_updates, 4)
        self.assertEqual(result.generator_updates, 4)
        self.assertTrue(all(row.is_finite() for row in result.loss_log.rows))

    def test_same_seed_same_generator(self):
        first = train_cgan(self.data, _tiny_config(epochs=1))
        second = train_cgan(self.data, _tiny_config(epochs=1))
        self.assertTrue(params_equal(first.generator.params, second.generator.params))
        self.assertEqual(first.loss_log.rows, second.loss_log.rows)

    def test_each_network_frozen_during_the_other_step(self):
        seen = []

        def on_step(phase, gen, disc):
            seen.append((phase, gen.copy().params, disc.copy().params))

        train_cgan(self.data, _tiny_config(epochs=2), on_step=on_step)
        self.assertEqual([phase for phase, _, _ in seen], ["discriminator", "generator"] * 4)
        for (_, _, disc_after_d), (_, _, disc_after_g) in zip(seen[0::2], seen[1::2]):
            self.assertTrue(params_equal(disc_after_d, disc_after_g))
        initial = build_generator(8, 4, 16, seed=3 * 4 + 1)
        self.assertTrue(params_equal(initial.params, seen[0][1]))
        for (_, gen_after_g, _), (_, gen_after_d, _) in zip(seen[1::2], seen[2::2]):
            self.assertTrue(params_equal(gen_after_g, gen_after_d))

    def test_outputs_written(self):
        with self.assertLogs("fruit_quality.cgan.trainer", level="WARNING"):
            result = train_cgan(self.data, _tiny_config(), out_dir=self.dir)
        self.assertEqual([record.epoch for record in result.checkpoints], [1, 2])
        final = result.checkpoints[-1]
        self.assertTrue(params_equal(load_checkpoint(final.generator), result.generator.params))
        self.assertEqual(png_read(final.grid).shape, (2 * 16 + 6, 2 * 16 + 6, 3))
        self.assertEqual(len(LossLog.read_csv(self.dir / "logs" / LOSS_LOG_FILE)), 2)

    def test_single_class_rejected(self):
        healthy = self.data.subset(np.flatnonzero(self.data.labels == HEALTHY))
        with self.assertRaises(DataError):
            train_cgan(healthy, _tiny_config())

    def test_resolution_mismatch(self):
        with self.assertRaises(DataError):
            train_cgan(self.data, _tiny_config(resolution=32))
