"""
Subcommands of the ``fruit-quality`` command line.

Each command receives the parsed arguments and the resolved ``RunConfig`` and writes
only inside its own run directory. Flags that correspond to configuration values use
dotted ``dest`` names (``cgan.epochs``) and are applied as overrides by ``main``.
"""

# Standard library imports
import argparse
import csv
import io
import json
import logging
import shutil
import time
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, List, Optional

# Third-party imports
import numpy as np

# Local imports
from ..cgan.sampling import emit_comparison_grid, emit_sample_grid
from ..cgan.trainer import train_cgan
from ..classify.evaluation import evaluate
from ..classify.search import (
    AUGMENT_TABLE_FILE,
    WIDTH_TABLE_FILE,
    augment_sweep,
    synthetic_stream,
    width_search,
)
from ..classify.training import train_classifier
from ..config import RunConfig
from ..data.coco import ingest_coco
from ..data.dataset import DATASET_FILE, HEALTHY, LABEL_NAMES, UNHEALTHY, Dataset
from ..data.splits import split
from ..data.toy import generate_toy_dataset
from ..exceptions import ConfigError, UsageError
from ..explain.overlay import EXPLAIN_TABLE_FILE, explain_batch
from ..nn.checkpoint import load_checkpoint, save_checkpoint
from ..nn.networks import ClassifierNet, GeneratorNet, build_classifier
from ..prune.finetune import PRUNE_TABLE_FILE, merge_pruning_tables, pruning_sweep
from .report import CLASSIFIER_EVAL_COLUMNS, CLASSIFIER_EVAL_FILE, generate_report
from .rundir import RunDirectory
from .verify import DEFAULT_TRIALS, SUITES, run_suites

logger = logging.getLogger(__name__)

CLASSIFIER_FILE = "classifier.fqck"
HISTORY_FILE = "classifier_history.csv"
HISTORY_COLUMNS = ("epoch", "train_loss", "train_accuracy", "val_loss", "val_accuracy")
SAMPLE_GRID_FILE = "samples.png"
COMPARISON_GRID_FILE = "comparison.png"

Command = Callable[[argparse.Namespace, RunConfig], int]


def int_list(value: str) -> List[int]:
    try:
        return [int(item) for item in value.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}")


def float_list(value: str) -> List[float]:
    try:
        return [float(item) for item in value.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {value!r}")


def overrides_from_args(args: argparse.Namespace) -> Dict[str, object]:
    """Dotted configuration keys set on the command line."""
    return {key: value for key, value in vars(args).items() if "." in key and value is not None}


def _start_run(args: argparse.Namespace, config: RunConfig) -> RunDirectory:
    out = Path(args.out) if args.out else Path(config.run_root) / args.command
    run = RunDirectory.create(out, config, args.command, overwrite=args.overwrite)
    run.attach_log(logging.getLevelName(config.log_level))
    logger.info(f"Run directory {run.path}")
    return run


def load_dataset(path: str) -> Dataset:
    """Load a dataset directory, or the ``data/`` directory of a run."""
    directory = Path(path)
    if not (directory / DATASET_FILE).is_file() and (directory / "data" / DATASET_FILE).is_file():
        directory = directory / "data"
    if not (directory / DATASET_FILE).is_file():
        raise UsageError(f"No dataset found at {path}")
    return Dataset.load(directory)


def _resolve_checkpoint(path: str, pattern: str) -> Path:
    """A checkpoint file, or the last file matching ``pattern`` under a run's checkpoints/."""
    target = Path(path)
    if target.is_file():
        return target
    matches = sorted((target / "checkpoints").glob(pattern)) if target.is_dir() else []
    if not matches:
        raise UsageError(f"No checkpoint found at {path}")
    return matches[-1]


def load_generator(path: str) -> GeneratorNet:
    return GeneratorNet.from_params(load_checkpoint(_resolve_checkpoint(path, "generator_epoch_*.fqck")))


def load_classifier(path: str) -> ClassifierNet:
    return ClassifierNet.from_params(load_checkpoint(_resolve_checkpoint(path, CLASSIFIER_FILE)))


def first_per_class(dataset: Dataset, per_class: Optional[int]) -> Dataset:
    """The first ``per_class`` images of each class, healthy first; everything when None."""
    if per_class is None:
        return dataset
    indices: List[int] = []
    for label in sorted(LABEL_NAMES):
        indices.extend(np.flatnonzero(dataset.labels == label)[:per_class].tolist())
    return dataset.subset(indices)


def _real_training_split(dataset: Dataset, config: RunConfig) -> Dataset:
    return first_per_class(dataset.split("train"), config.search.train_per_class)


def _with_synthetic(train: Dataset, synthetic_path: Optional[str], per_class: Optional[int]) -> Dataset:
    if not synthetic_path:
        return train
    synthetic = first_per_class(load_dataset(synthetic_path), per_class)
    if len(synthetic) == 0:
        logger.warning(f"Synthetic dataset {synthetic_path} is empty")
        return train
    logger.info(f"Adding {len(synthetic)} synthetic images to {len(train)} real training images")
    return train.concat(synthetic.with_splits(["train"] * len(synthetic)))


def _store_dataset(run: RunDirectory, dataset: Dataset):
    dataset.save(run.data)
    counts = dataset.class_counts()
    run.record(
        images=len(dataset),
        healthy=counts.get(HEALTHY, 0),
        unhealthy=counts.get(UNHEALTHY, 0),
        resolution=dataset.resolution,
    )
    logger.info(f"Saved {len(dataset)} images to {run.data}")


def datagen(args: argparse.Namespace, config: RunConfig) -> int:
    with _start_run(args, config) as run:
        started = time.perf_counter()
        dataset = generate_toy_dataset(
            config.data.n,
            config.data.resolution,
            config.seed,
            unhealthy_fraction=config.data.unhealthy_fraction,
            workers=config.threads,
        )
        dataset = split(dataset, config.data.split_fractions, seed=config.seed)
        _store_dataset(run, dataset)
        run.timed("datagen", time.perf_counter() - started)
    return 0


def ingest(args: argparse.Namespace, config: RunConfig) -> int:
    category_map = config.data.category_map
    if args.category_map:
        try:
            category_map = json.loads(Path(args.category_map).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"Category map {args.category_map} is not valid JSON: {e}")
    with _start_run(args, config) as run:
        started = time.perf_counter()
        dataset = ingest_coco(
            args.images,
            args.annotations,
            category_map=category_map,
            target_resolution=config.data.resolution,
            bg_threshold=config.data.bg_threshold,
            workers=config.threads,
        )
        dataset = split(dataset, config.data.split_fractions, seed=config.seed)
        _store_dataset(run, dataset)
        run.timed("ingest", time.perf_counter() - started)
    return 0


def train_cgan_command(args: argparse.Namespace, config: RunConfig) -> int:
    train = load_dataset(args.data).split("train")
    cgan_cfg = replace(config.cgan, resolution=train.resolution)
    with _start_run(args, config) as run:
        started = time.perf_counter()
        result = train_cgan(train, cgan_cfg, out_dir=run.path)
        low_epoch, low_loss = result.loss_log.lowest_generator_loss()
        run.record(
            resolution=train.resolution,
            train_size=len(train),
            checkpoint_epochs=[c.epoch for c in result.checkpoints],
            lowest_generator_loss={"epoch": low_epoch, "g_loss": low_loss},
            generator_filters=list(result.generator.block_filters),
            label_smoothing="none",
        )
        run.timed("train_cgan", time.perf_counter() - started)
    return 0


def sample_command(args: argparse.Namespace, config: RunConfig) -> int:
    gen = load_generator(args.generator)
    per_class = config.cgan.samples_per_class
    cols = config.cgan.grid_columns
    with _start_run(args, config) as run:
        synthetic = synthetic_stream(gen, per_class, config.search.sample_seed)
        _store_dataset(run, synthetic)
        emit_sample_grid(synthetic.images, cols, run.samples / SAMPLE_GRID_FILE)
        if args.data:
            real = first_per_class(load_dataset(args.data).split("train"), per_class)
            emit_comparison_grid(real.images, synthetic.images, cols, run.samples / COMPARISON_GRID_FILE)
        run.record(generator=str(args.generator), per_class=per_class)
    return 0


def _history_csv(history) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(HISTORY_COLUMNS)
    for m in history:
        writer.writerow(
            [m.epoch, f"{m.train_loss:.6f}", f"{m.train_accuracy:.6f}", f"{m.val_loss:.6f}", f"{m.val_accuracy:.6f}"]
        )
    return buffer.getvalue()


def _evaluation_csv(model: ClassifierNet, splits: Dict[str, Dataset]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CLASSIFIER_EVAL_COLUMNS)
    for name, dataset in splits.items():
        if len(dataset) == 0:
            continue
        result = evaluate(model, dataset)
        writer.writerow(
            [
                name,
                f"{result.accuracy:.6f}",
                result.true_negatives,
                result.false_positives,
                result.false_negatives,
                result.true_positives,
            ]
        )
        logger.info(f"{name} accuracy {result.accuracy:.4f}")
    return buffer.getvalue()


def train_classifier_command(args: argparse.Namespace, config: RunConfig) -> int:
    dataset = load_dataset(args.data)
    train = _with_synthetic(_real_training_split(dataset, config), args.synthetic, args.synthetic_per_class)
    width = config.classifier.interpretation_width
    initial = None
    if args.backbone:
        initial = build_classifier(train.resolution, width, seed=config.seed).load_backbone(args.backbone)
    with _start_run(args, config) as run:
        started = time.perf_counter()
        model, record = train_classifier(
            train, dataset.split("val"), width, config.seed, config.classifier, initial=initial
        )
        save_checkpoint(model.params, run.checkpoints / CLASSIFIER_FILE)
        (run.logs / HISTORY_FILE).write_text(_history_csv(record.history), encoding="utf-8")
        evaluation = _evaluation_csv(model, {"val": dataset.split("val"), "test": dataset.split("test")})
        (run.logs / CLASSIFIER_EVAL_FILE).write_text(evaluation, encoding="utf-8")
        run.record(
            width=width,
            train_size=record.train_size,
            train_all_real=train.is_all_real(),
            best_epoch=record.best_epoch,
            epochs_run=record.epochs_run,
            val_accuracy=record.final_val_accuracy,
            backbone=str(args.backbone) if args.backbone else None,
            frozen_layers="none",
        )
        run.timed("train_classifier", time.perf_counter() - started)
    return 0


def width_search_command(args: argparse.Namespace, config: RunConfig) -> int:
    dataset = load_dataset(args.data)
    with _start_run(args, config) as run:
        started = time.perf_counter()
        table = width_search(
            config.search.widths,
            config.search.seeds,
            _real_training_split(dataset, config),
            dataset.split("val"),
            config.classifier,
            workers=config.threads,
        )
        table.write_csv(run.logs / WIDTH_TABLE_FILE)
        best = table.best_width()
        run.record(best_width=best, best_mean_accuracy=table.mean(best))
        run.timed("width_search", time.perf_counter() - started)
    return 0


def augment_sweep_command(args: argparse.Namespace, config: RunConfig) -> int:
    dataset = load_dataset(args.data)
    gen = load_generator(args.generator)
    with _start_run(args, config) as run:
        started = time.perf_counter()
        table = augment_sweep(
            _real_training_split(dataset, config),
            dataset.split("val"),
            gen,
            config.search.counts,
            config.classifier.interpretation_width,
            config.search.seeds,
            config.classifier,
            sample_seed=config.search.sample_seed,
            workers=config.threads,
        )
        table.write_csv(run.logs / AUGMENT_TABLE_FILE)
        run.record(best_count=table.best_count(), generator=str(args.generator))
        run.timed("augment_sweep", time.perf_counter() - started)
    return 0


def _explain_set(dataset: Dataset, name: str, limit: int) -> Dataset:
    selected = dataset if name == "all" else dataset.split(name)
    return selected.subset(range(min(limit, len(selected))))


def gradcam_command(args: argparse.Namespace, config: RunConfig) -> int:
    model = load_classifier(args.classifier)
    explain = config.explain
    images = _explain_set(load_dataset(args.data), explain.split, explain.limit)
    if args.generator and explain.synthetic_per_class:
        stream = synthetic_stream(load_generator(args.generator), explain.synthetic_per_class, config.search.sample_seed)
        images = images.concat(stream)
    if len(images) == 0:
        raise UsageError(f"No images in split {explain.split!r} of {args.data}")
    with _start_run(args, config) as run:
        started = time.perf_counter()
        gallery = run.samples / "gradcam"
        report = explain_batch(
            model, images, out_dir=gallery, target_layer=explain.target_layer, workers=config.threads, alpha=explain.alpha
        )
        shutil.copyfile(gallery / EXPLAIN_TABLE_FILE, run.logs / EXPLAIN_TABLE_FILE)
        run.record(images=len(images), localization_rate=report.localization_rate())
        run.timed("gradcam", time.perf_counter() - started)
    return 0


def prune_command(args: argparse.Namespace, config: RunConfig) -> int:
    dataset = load_dataset(args.data)
    real_train = _real_training_split(dataset, config)
    val = dataset.split("val")
    variants = {"vanilla": (load_classifier(args.classifier), real_train)}
    if args.augmented_classifier:
        augmented_train = _with_synthetic(real_train, args.synthetic, args.synthetic_per_class)
        variants["augmented"] = (load_classifier(args.augmented_classifier), augmented_train)

    with _start_run(args, config) as run:
        tables = {}
        for variant, (model, train) in variants.items():
            started = time.perf_counter()
            tables[variant] = pruning_sweep(
                model,
                train,
                val,
                config.prune.targets,
                config.seed,
                prune_cfg=config.prune,
                cfg=config.classifier,
                workers=config.threads,
                out_dir=run.path,
                variant=variant,
            )
            run.timed(f"prune_{variant}", time.perf_counter() - started)
        merged = merge_pruning_tables(tables.get("vanilla"), tables.get("augmented"))
        (run.logs / PRUNE_TABLE_FILE).write_text(merged, encoding="utf-8")
        run.record(pruning={variant: table.metadata for variant, table in tables.items()})
    return 0


def report_command(args: argparse.Namespace, config: RunConfig) -> int:
    summary = generate_report(args.runs, out_dir=args.out)
    print(summary)
    return 0


def verify_command(args: argparse.Namespace, config: RunConfig) -> int:
    results = run_suites(args.suite or list(SUITES), trials=args.trials, seed=config.seed)
    for result in results:
        status = "ok" if result.ok else "FAILED"
        print(f"{result.name}: {result.passed} passed, {result.failed} failed [{status}]")
        for failure in result.failures:
            print(f"  {failure}")
    passed = sum(r.passed for r in results)
    failed = sum(r.failed for r in results)
    print(f"{passed} checks passed, {failed} failed")
    return 0 if failed == 0 else 2


def _run_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--out", help="Run directory (default: <run_root>/<command>)")
    parser.add_argument("--overwrite", action="store_true", help="Replace an existing run directory")


def _classifier_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--max-epochs", type=int, dest="classifier.max_epochs")
    parser.add_argument("--patience", type=int, dest="classifier.patience")
    parser.add_argument("--batch-size", type=int, dest="classifier.batch_size")
    parser.add_argument("--lr", type=float, dest="classifier.lr")
    parser.add_argument(
        "--train-per-class",
        type=int,
        dest="search.train_per_class",
        help="Use only the first N real training images of each class",
    )


def add_commands(subparsers) -> Dict[str, Command]:
    """Register every subcommand and return the name -> handler table."""
    commands: Dict[str, Command] = {}

    p = subparsers.add_parser("datagen", help="Generate the procedural toy dataset")
    p.add_argument("--n", type=int, dest="data.n", help="Number of images")
    p.add_argument("--resolution", type=int, dest="data.resolution")
    p.add_argument("--unhealthy-fraction", type=float, dest="data.unhealthy_fraction")
    p.add_argument("--seed", type=int)
    _run_flags(p)
    commands["datagen"] = datagen

    p = subparsers.add_parser("ingest", help="Build a dataset from COCO annotations")
    p.add_argument("--images", required=True, help="Directory the annotation file names are relative to")
    p.add_argument("--annotations", required=True, help="COCO JSON file")
    p.add_argument("--resolution", type=int, dest="data.resolution")
    p.add_argument("--bg-threshold", type=float, dest="data.bg_threshold")
    p.add_argument("--category-map", help="JSON file mapping category names to defect kinds or null")
    p.add_argument("--seed", type=int, help="Split seed")
    _run_flags(p)
    commands["ingest"] = ingest

    p = subparsers.add_parser("train-cgan", help="Train the conditional GAN on a dataset's train split")
    p.add_argument("--data", required=True, help="Dataset directory or datagen/ingest run")
    p.add_argument("--epochs", type=int, dest="cgan.epochs")
    p.add_argument("--batch-size", type=int, dest="cgan.batch_size")
    p.add_argument("--checkpoint-interval", type=int, dest="cgan.checkpoint_interval")
    p.add_argument("--latent-dim", type=int, dest="cgan.latent_dim")
    p.add_argument(
        "--saturating",
        action="store_const",
        const=True,
        dest="cgan.saturating_generator_loss",
        help="Use the saturating generator loss",
    )
    p.add_argument("--seed", type=int, dest="cgan.seed")
    _run_flags(p)
    commands["train-cgan"] = train_cgan_command

    p = subparsers.add_parser("sample", help="Sample labelled images from a generator checkpoint")
    p.add_argument("--generator", required=True, help="Generator checkpoint or train-cgan run (last epoch)")
    p.add_argument("--per-class", type=int, dest="cgan.samples_per_class")
    p.add_argument("--columns", type=int, dest="cgan.grid_columns")
    p.add_argument("--seed", type=int, dest="search.sample_seed")
    p.add_argument("--data", help="Real dataset for a side-by-side comparison grid")
    _run_flags(p)
    commands["sample"] = sample_command

    p = subparsers.add_parser("train-classifier", help="Train one classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--width", type=int, dest="classifier.interpretation_width")
    p.add_argument("--seed", type=int)
    p.add_argument("--synthetic", help="Synthetic dataset added to the training split only")
    p.add_argument("--synthetic-per-class", type=int)
    p.add_argument("--backbone", help="Checkpoint whose backbone.* tensors initialise the network")
    _classifier_flags(p)
    _run_flags(p)
    commands["train-classifier"] = train_classifier_command

    p = subparsers.add_parser("width-search", help="Search the interpretation layer width")
    p.add_argument("--data", required=True)
    p.add_argument("--widths", type=int_list, dest="search.widths")
    p.add_argument("--seeds", type=int_list, dest="search.seeds")
    _classifier_flags(p)
    _run_flags(p)
    commands["width-search"] = width_search_command

    p = subparsers.add_parser("augment-sweep", help="Sweep the number of synthetic training images")
    p.add_argument("--data", required=True)
    p.add_argument("--generator", required=True)
    p.add_argument("--counts", type=int_list, dest="search.counts", help="Synthetic images per class")
    p.add_argument("--width", type=int, dest="classifier.interpretation_width")
    p.add_argument("--seeds", type=int_list, dest="search.seeds")
    p.add_argument("--sample-seed", type=int, dest="search.sample_seed")
    _classifier_flags(p)
    _run_flags(p)
    commands["augment-sweep"] = augment_sweep_command

    p = subparsers.add_parser("gradcam", help="Grad-CAM overlays for a trained classifier")
    p.add_argument("--classifier", required=True, help="Classifier checkpoint or train-classifier run")
    p.add_argument("--data", required=True)
    p.add_argument("--split", dest="explain.split", choices=("train", "val", "test", "all"))
    p.add_argument("--limit", type=int, dest="explain.limit")
    p.add_argument("--layer", dest="explain.target_layer", help="Convolution layer name")
    p.add_argument("--alpha", type=float, dest="explain.alpha")
    p.add_argument("--generator", help="Also explain synthetic images from this generator")
    p.add_argument("--synthetic-per-class", type=int, dest="explain.synthetic_per_class")
    _run_flags(p)
    commands["gradcam"] = gradcam_command

    p = subparsers.add_parser("prune", help="Prune and fine-tune classifiers over sparsity targets")
    p.add_argument("--classifier", required=True, help="Classifier trained on real data")
    p.add_argument("--data", required=True)
    p.add_argument("--augmented-classifier", help="Classifier trained with synthetic images")
    p.add_argument("--synthetic", help="Synthetic dataset the augmented classifier was trained with")
    p.add_argument("--synthetic-per-class", type=int)
    p.add_argument("--targets", type=float_list, dest="prune.targets", help="Final sparsities")
    p.add_argument("--epochs", type=int, dest="prune.epochs")
    p.add_argument("--power", type=float, dest="prune.power")
    p.add_argument("--scope", choices=("tensor", "global"), dest="prune.scope")
    p.add_argument("--seed", type=int)
    p.add_argument("--train-per-class", type=int, dest="search.train_per_class")
    p.add_argument("--batch-size", type=int, dest="classifier.batch_size")
    _run_flags(p)
    commands["prune"] = prune_command

    p = subparsers.add_parser("report", help="Summarise one or more run directories")
    p.add_argument("runs", nargs="+", help="Run directories")
    p.add_argument("--out", help="Report directory (default: reports/ of the first run)")
    commands["report"] = report_command

    p = subparsers.add_parser("verify", help="Run the built-in gradient, convolution and schedule checks")
    p.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    p.add_argument("--suite", action="append", choices=sorted(SUITES))
    p.add_argument("--seed", type=int)
    commands["verify"] = verify_command

    return commands
