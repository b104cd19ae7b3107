# Standard library imports
import io
import json
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

# Third-party imports
import pytest

# Local imports
from fruit_quality.cgan import LossLog, LossRow
from fruit_quality.cgan.trainer import LOSS_LOG_FILE
from fruit_quality.classify import AUGMENT_TABLE_FILE, AugmentRow, AugmentTable
from fruit_quality.cli import RunDirectory, generate_report, main, run_suites
from fruit_quality.cli.charts import line_chart, loss_charts
from fruit_quality.cli.commands import first_per_class, int_list
from fruit_quality.cli.verify import conv_oracle_suite, gradcheck_suite
from fruit_quality.config import RunConfig
from fruit_quality.data import Dataset, generate_toy_dataset
from fruit_quality.exceptions import ReportError, UsageError


def run_cli(*argv):
    """Run the console entry point and return (exit code, stdout, stderr)."""
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()


class CliTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()


@pytest.mark.unit
class ArgumentTestCase(CliTestCase):
    def test_no_command(self):
        code, _, err = run_cli()
        self.assertEqual(code, 1)
        self.assertIn("no command", err)

    def test_unknown_command(self):
        self.assertEqual(run_cli("dance")[0], 1)

    def test_missing_config_file(self):
        code, _, err = run_cli("--config", self.dir / "absent.json", "verify", "--suite", "schedule")
        self.assertEqual(code, 1)
        self.assertIn("not found", err)

    def test_invalid_configuration_value(self):
        code, _, err = run_cli("datagen", "--resolution", "20", "--out", self.dir / "d")
        self.assertEqual(code, 1)
        self.assertIn("data.resolution", err)
        self.assertFalse((self.dir / "d").exists())

    def test_bad_list_flag(self):
        self.assertEqual(run_cli("width-search", "--data", self.dir, "--widths", "8,x")[0], 1)

    def test_help_config(self):
        code, out, _ = run_cli("--help-config")
        self.assertEqual(code, 0)
        self.assertIn("Sections", out)

    def test_missing_dataset_is_usage_error(self):
        code, _, err = run_cli("train-cgan", "--data", self.dir / "nothing", "--out", self.dir / "c")
        self.assertEqual(code, 1)
        self.assertIn("No dataset", err)

    def test_int_list(self):
        self.assertEqual(int_list("8, 16,32"), [8, 16, 32])

    def test_first_per_class(self):
        data = generate_toy_dataset(10, 16, seed=0)
        limited = first_per_class(data, 2)
        self.assertEqual(sorted(limited.labels.tolist()), [0, 0, 1, 1])
        self.assertIs(first_per_class(data, None), data)


@pytest.mark.unit
class VerifyTestCase(CliTestCase):
    def test_schedule_suite_passes(self):
        code, out, _ = run_cli("verify", "--suite", "schedule")
        self.assertEqual(code, 0)
        self.assertIn("schedule:", out)
        self.assertIn("0 failed", out.splitlines()[-1])

    def test_run_suites(self):
        results = run_suites(["schedule"], trials=1)
        self.assertEqual([r.name for r in results], ["schedule"])
        self.assertTrue(results[0].ok)

    def test_whole_network_gradients_checked_over_all_parameters(self):
        result = gradcheck_suite(trials=0, seed=3)
        self.assertTrue(result.ok, result.failures)
        self.assertEqual(result.passed, 3)


@pytest.mark.integration
class VerifyAllSuitesTestCase(CliTestCase):
    def test_every_suite_passes_with_few_trials(self):
        code, out, _ = run_cli("verify", "--trials", "2", "--seed", "5")
        self.assertEqual(code, 0, out)
        for name in ("gradcheck", "conv-oracle", "schedule"):
            self.assertIn(f"{name}:", out)

    def test_convolution_oracle_grid_reaches_batch_four_eight_channels_sixteen_pixels(self):
        result = conv_oracle_suite(seed=2)
        self.assertTrue(result.ok, result.failures)
        # 96 shapes, each with two conv2d dtypes and one transpose, plus 8 dense shapes.
        self.assertGreaterEqual(result.passed, 96 * 3 + 8)


@pytest.mark.unit
class RunDirectoryTestCase(CliTestCase):
    def test_layout_and_snapshot(self):
        config = RunConfig.load(overrides={"seed": 5})
        with RunDirectory.create(self.dir / "run", config, "datagen") as run:
            run.record(images=3)
        for name in ("data", "checkpoints", "samples", "logs", "reports"):
            self.assertTrue((run.path / name).is_dir())
        self.assertEqual(run.config(), config)
        metadata = json.loads((run.path / "metadata.json").read_text())
        self.assertEqual(metadata["status"], "completed")
        self.assertEqual(metadata["seed"], 5)
        self.assertIn("total", metadata["wall_time"])

    def test_existing_run_needs_overwrite(self):
        config = RunConfig.load()
        RunDirectory.create(self.dir / "run", config, "datagen").close()
        (self.dir / "run" / "notes.txt").write_text("keep", encoding="utf-8")
        with self.assertRaises(UsageError):
            RunDirectory.create(self.dir / "run", config, "datagen")
        RunDirectory.create(self.dir / "run", config, "datagen", overwrite=True).close()
        self.assertTrue((self.dir / "run" / "notes.txt").is_file())

    def test_failed_status(self):
        with self.assertRaises(RuntimeError):
            with RunDirectory.create(self.dir / "run", RunConfig.load(), "datagen"):
                raise RuntimeError("boom")
        self.assertEqual(RunDirectory.open(self.dir / "run").metadata["status"], "failed")

    def test_open_missing(self):
        with self.assertRaises(UsageError):
            RunDirectory.open(self.dir / "missing")


@pytest.mark.unit
class ChartTestCase(CliTestCase):
    def test_charts_are_reproducible(self):
        log = LossLog()
        for epoch in range(1, 4):
            log.append(LossRow(epoch, 1.0 / epoch, 0.5, 0.6))
        first = loss_charts(log, self.dir / "a")
        second = loss_charts(log, self.dir / "b")
        self.assertEqual(set(first), {"generator", "discriminator"})
        for name in first:
            self.assertEqual(first[name].read_bytes(), second[name].read_bytes())

    def test_line_chart_writes_png(self):
        path = line_chart({"accuracy": [0.5, 0.7]}, [10, 20], self.dir / "c.png", "Accuracy")
        self.assertEqual(path.read_bytes()[:8], b"\x89PNG\r\n\x1a\n")


@pytest.mark.unit
class ReportTestCase(CliTestCase):
    def _run(self, name, command="train-cgan"):
        run = RunDirectory.create(self.dir / name, RunConfig.load(), command)
        run.close()
        return run

    def _cgan_run(self, name):
        run = self._run(name)
        log = LossLog()
        for epoch, g_loss in enumerate((1.5, 0.9, 1.1), start=1):
            log.append(LossRow(epoch, g_loss, 0.6, 0.7))
        log.write_csv(run.logs / LOSS_LOG_FILE)
        return run

    def test_cgan_only_report_has_curves_and_no_tables(self):
        run = self._cgan_run("cgan")
        summary = generate_report([run.path]).read_text(encoding="utf-8")
        self.assertIn("## Conditional GAN", summary)
        self.assertIn("- Lowest generator loss: epoch 2 (0.9000)", summary)
        self.assertEqual(len(list(run.reports.glob("*.png"))), 2)
        self.assertFalse(any(line.startswith("|") for line in summary.splitlines()))
        for heading in ("## Interpretation width search", "## Training data augmentation", "## Pruning"):
            self.assertNotIn(heading, summary)

    def test_identical_logs_give_identical_reports(self):
        outputs = []
        for name in ("a", "b"):
            run = self._cgan_run(name)
            generate_report([run.path])
            outputs.append({p.name: p.read_bytes() for p in sorted(run.reports.iterdir())})
        self.assertEqual(outputs[0], outputs[1])

    def test_augmentation_delta_against_baseline(self):
        run = self._run("augment", "augment-sweep")
        table = AugmentTable(
            [
                AugmentRow(0, 0, 1, 0.80, 40),
                AugmentRow(0, 0, 2, 0.82, 40),
                AugmentRow(25, 50, 1, 0.86, 90),
                AugmentRow(25, 50, 2, 0.88, 90),
            ]
        )
        table.write_csv(run.logs / AUGMENT_TABLE_FILE)
        summary = generate_report([run.path]).read_text(encoding="utf-8")
        self.assertIn("- Accuracy 81.00% without augmentation, 87.00% with it (+6.00 points)", summary)
        self.assertIn("| 25 | 50 | 87.00 | +6.00 |", summary)
        self.assertNotIn("## Conditional GAN", summary)


@pytest.mark.integration
class DatagenCommandTestCase(CliTestCase):
    def test_same_seed_same_manifest(self):
        for name in ("a", "b"):
            code, _, err = run_cli("datagen", "--n", 20, "--resolution", 16, "--seed", 3, "--out", self.dir / name)
            self.assertEqual(code, 0, err)
        manifest_a = (self.dir / "a" / "data" / "manifest.csv").read_text()
        self.assertEqual(manifest_a, (self.dir / "b" / "data" / "manifest.csv").read_text())
        images_a = Dataset.load(self.dir / "a" / "data").images
        self.assertEqual(images_a.tobytes(), Dataset.load(self.dir / "b" / "data").images.tobytes())
        metadata = json.loads((self.dir / "a" / "metadata.json").read_text())
        self.assertEqual((metadata["images"], metadata["command"]), (20, "datagen"))
        self.assertTrue((self.dir / "a" / "logs" / "run.log").is_file())

    def test_rerun_requires_overwrite(self):
        args = ("datagen", "--n", 20, "--resolution", 16, "--out", self.dir / "a")
        self.assertEqual(run_cli(*args)[0], 0)
        self.assertEqual(run_cli(*args)[0], 1)
        self.assertEqual(run_cli(*args, "--overwrite")[0], 0)

    def test_report_without_logs(self):
        run_cli("datagen", "--n", 20, "--resolution", 16, "--out", self.dir / "a")
        with self.assertRaises(ReportError):
            generate_report([self.dir / "a"])
        self.assertEqual(run_cli("report", self.dir / "a")[0], 2)


@pytest.mark.slow
class PipelineTestCase(CliTestCase):
    def test_end_to_end(self):
        data = self.dir / "data"
        steps = [
            ("datagen", "--n", 24, "--resolution", 16, "--seed", 1, "--out", data),
            (
                "train-cgan",
                "--data",
                data,
                "--epochs",
                1,
                "--batch-size",
                8,
                "--latent-dim",
                8,
                "--out",
                self.dir / "cgan",
            ),
            ("sample", "--generator", self.dir / "cgan", "--per-class", 2, "--data", data, "--out", self.dir / "sample"),
            (
                "train-classifier",
                "--data",
                data,
                "--width",
                4,
                "--max-epochs",
                1,
                "--synthetic",
                self.dir / "sample",
                "--out",
                self.dir / "clf",
            ),
            ("gradcam", "--classifier", self.dir / "clf", "--data", data, "--limit", 2, "--out", self.dir / "cam"),
            (
                "prune",
                "--classifier",
                self.dir / "clf",
                "--data",
                data,
                "--targets",
                "0.5",
                "--epochs",
                1,
                "--out",
                self.dir / "prune",
            ),
        ]
        for step in steps:
            code, _, err = run_cli(*step)
            self.assertEqual(code, 0, f"{step[0]}: {err}")

        self.assertTrue((self.dir / "cgan" / "logs" / "cgan_loss.csv").is_file())
        self.assertTrue((self.dir / "sample" / "samples" / "comparison.png").is_file())
        clf_meta = json.loads((self.dir / "clf" / "metadata.json").read_text())
        self.assertFalse(clf_meta["train_all_real"])
        self.assertEqual(len(list((self.dir / "cam" / "samples" / "gradcam").glob("*_raw.png"))), 2)
        self.assertTrue((self.dir / "prune" / "logs" / "pruning.csv").is_file())

        code, out, err = run_cli(
            "report", self.dir / "cgan", self.dir / "sample", self.dir / "clf", self.dir / "cam", self.dir / "prune"
        )
        self.assertEqual(code, 0, err)
        summary = (self.dir / "cgan" / "reports" / "summary.md").read_text()
        self.assertIn("# Fruit quality experiment report", summary)
        self.assertIn("summary.md", out)
