"""
Markdown summary of one or more run directories.

The summary is rebuilt from the CSV logs alone and contains no timestamps, so
identical logs give a byte-identical report.
"""

# Standard library imports
import csv
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

# Local imports
from ..cgan.trainer import LOSS_LOG_FILE, LossLog
from ..classify.search import AUGMENT_TABLE_FILE, WIDTH_TABLE_FILE, AugmentTable, WidthSearchTable
from ..data.dataset import REAL, SYNTHETIC
from ..exceptions import FruitQualityError, ReportError
from ..explain.overlay import EXPLAIN_TABLE_FILE, ExplainReport
from ..prune.finetune import PRUNE_TABLE_FILE, PruningTable, merge_pruning_tables
from .charts import loss_charts
from .rundir import RunDirectory

logger = logging.getLogger(__name__)

SUMMARY_FILE = "summary.md"
CLASSIFIER_EVAL_FILE = "classifier_eval.csv"
CLASSIFIER_EVAL_COLUMNS = ("split", "accuracy", "tn", "fp", "fn", "tp")
PRUNING_VARIANTS = ("vanilla", "augmented")
GALLERY_LIMIT = 12


@dataclass
class Artifacts:
    """First occurrence of each known log across the given runs."""

    logs: Dict[str, Path]
    grids: List[Path]
    gallery: List[Path]


def pruning_log_name(variant: str) -> str:
    return f"pruning_{variant}.csv"


def _collect(runs: Sequence[RunDirectory]) -> Artifacts:
    names = [
        LOSS_LOG_FILE,
        WIDTH_TABLE_FILE,
        AUGMENT_TABLE_FILE,
        EXPLAIN_TABLE_FILE,
        CLASSIFIER_EVAL_FILE,
    ] + [pruning_log_name(v) for v in PRUNING_VARIANTS]
    logs: Dict[str, Path] = {}
    grids: List[Path] = []
    gallery: List[Path] = []
    for run in runs:
        for name in names:
            candidate = run.logs / name
            if not candidate.is_file():
                continue
            if name in logs:
                logger.warning(f"Ignoring {candidate}; {logs[name]} is already in the report")
                continue
            logs[name] = candidate
        grids += sorted(run.samples.glob("*.png"))
        gallery += sorted(
            path for path in (run.samples / "gradcam").glob("*.png") if not path.stem.endswith("_raw")
        )
    return Artifacts(logs, grids, gallery[:GALLERY_LIMIT])


def _percent(value: float) -> str:
    return f"{100.0 * value:.2f}"


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> List[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(row) + " |" for row in rows]
    return lines + [""]


def _link(path: Path, base: Path) -> str:
    return Path(os.path.relpath(path, base)).as_posix()


def _cgan_section(path: Path, reports: Path) -> List[str]:
    log = LossLog.read_csv(path)
    final = log.final()
    low_epoch, low_loss = log.lowest_generator_loss()
    charts = loss_charts(log, reports)
    return [
        "## Conditional GAN",
        "",
        f"- Epochs trained: {len(log.rows)}",
        f"- Final epoch {final.epoch}: generator {final.g_loss:.4f}, "
        f"discriminator real {final.d_loss_real:.4f}, fake {final.d_loss_fake:.4f}",
        f"- Lowest generator loss: epoch {low_epoch} ({low_loss:.4f})",
        "",
        f"![Generator loss]({_link(charts['generator'], reports)})",
        "",
        f"![Discriminator loss]({_link(charts['discriminator'], reports)})",
        "",
    ]


def _width_section(path: Path) -> List[str]:
    table = WidthSearchTable.read_csv(path)
    if not table.rows:
        return []
    counts = {w: sum(1 for r in table.rows if r.width == w) for w in table.widths}
    best = table.best_width()
    run = table.best_run()
    return (
        ["## Interpretation width search", ""]
        + _table(
            ["Width", "Mean val accuracy (%)", "Runs"],
            [[str(w), _percent(table.mean(w)), str(counts[w])] for w in table.widths],
        )
        + [
            f"- Best mean: width {best} ({_percent(table.mean(best))}%)",
            f"- Best single run: width {run.width}, seed {run.seed} ({_percent(run.val_accuracy)}%)",
            "",
        ]
    )


def _augment_section(path: Path) -> List[str]:
    table = AugmentTable.read_csv(path)
    if not table.rows:
        return []
    rows = []
    for count in table.counts:
        delta = table.baseline_delta(count)
        rows.append(
            [
                str(count),
                str(2 * count),
                _percent(table.mean(count)),
                "" if delta is None else f"{100.0 * delta:+.2f}",
            ]
        )
    best = table.best_count()
    lines = ["## Training data augmentation", ""]
    lines += _table(
        ["Synthetic / class", "Synthetic total", "Mean val accuracy (%)", "Change vs. none (points)"], rows
    )
    lines.append(f"- Best count: {best} synthetic images per class ({_percent(table.mean(best))}%)")
    delta = table.baseline_delta(best)
    if delta is not None:
        lines.append(
            f"- Accuracy {_percent(table.mean(0))}% without augmentation, "
            f"{_percent(table.mean(best))}% with it ({100.0 * delta:+.2f} points)"
        )
    return lines + [""]


def _pruning_section(logs: Dict[str, Path], reports: Path) -> List[str]:
    tables = {
        variant: PruningTable.read_csv(logs[pruning_log_name(variant)], variant)
        for variant in PRUNING_VARIANTS
        if pruning_log_name(variant) in logs
    }
    if not any(t.rows for t in tables.values()):
        return []
    merged = merge_pruning_tables(tables.get("vanilla"), tables.get("augmented"))
    (reports / PRUNE_TABLE_FILE).write_text(merged, encoding="utf-8")
    rows = []
    for record in csv.DictReader(merged.splitlines()):
        rows.append(
            [
                record["size_percent"],
                f"{float(record['final_sparsity']):.2f}",
                _percent(float(record["accuracy_vanilla"])) if record["accuracy_vanilla"] else "",
                _percent(float(record["accuracy_augmented"])) if record["accuracy_augmented"] else "",
            ]
        )
    return (
        ["## Pruning", ""]
        + _table(["Model size (%)", "Sparsity", "Vanilla accuracy (%)", "Augmented accuracy (%)"], rows)
        + [f"Merged table: [{PRUNE_TABLE_FILE}]({PRUNE_TABLE_FILE})", ""]
    )


def _classifier_section(path: Path) -> List[str]:
    with open(path, newline="", encoding="utf-8") as handle:
        records = list(csv.DictReader(handle))
    if not records:
        return []
    rows = [
        [r["split"], _percent(float(r["accuracy"])), r["tn"], r["fp"], r["fn"], r["tp"]] for r in records
    ]
    return ["## Classifier evaluation", ""] + _table(
        ["Split", "Accuracy (%)", "TN", "FP", "FN", "TP"], rows
    )


def _gradcam_section(path: Path, gallery: Sequence[Path], reports: Path) -> List[str]:
    report = ExplainReport.read_csv(path)
    real = sum(1 for r in report.rows if r.provenance == REAL)
    synthetic = sum(1 for r in report.rows if r.provenance == SYNTHETIC)
    rate = report.localization_rate()
    lines = [
        "## Grad-CAM",
        "",
        f"- Images explained: {len(report.rows)} ({real} real, {synthetic} synthetic)",
        "- Heatmap peak inside a dilated defect box: "
        + ("n/a" if rate is None else f"{_percent(rate)}% of correctly classified unhealthy images"),
        "",
    ]
    for image in gallery:
        lines += [f"![{image.stem}]({_link(image, reports)})", ""]
    return lines


def generate_report(run_dirs: Sequence[os.PathLike], out_dir: Optional[os.PathLike] = None) -> Path:
    """
    Write ``summary.md`` and charts for the given runs.

    The report goes to ``out_dir`` or to the ``reports/`` directory of the first run.

    Raises:
        ReportError: no run holds a completed experiment log
    """
    if not run_dirs:
        raise ReportError("No run directories given")
    runs = [RunDirectory.open(path) for path in run_dirs]
    reports = Path(out_dir) if out_dir is not None else runs[0].reports
    artifacts = _collect(runs)
    if not artifacts.logs and not artifacts.grids:
        raise ReportError(f"No experiment logs found in {', '.join(str(r.path) for r in runs)}")
    reports.mkdir(parents=True, exist_ok=True)

    lines = ["# Fruit quality experiment report", "", "Runs:", ""]
    lines += [f"- `{_link(run.path, reports)}`" for run in runs] + [""]
    logs = artifacts.logs
    try:
        if LOSS_LOG_FILE in logs:
            lines += _cgan_section(logs[LOSS_LOG_FILE], reports)
        if artifacts.grids:
            lines += ["## Sample grids", ""]
            for grid in artifacts.grids:
                lines += [f"![{grid.stem}]({_link(grid, reports)})", ""]
        if WIDTH_TABLE_FILE in logs:
            lines += _width_section(logs[WIDTH_TABLE_FILE])
        if AUGMENT_TABLE_FILE in logs:
            lines += _augment_section(logs[AUGMENT_TABLE_FILE])
        lines += _pruning_section(logs, reports)
        if CLASSIFIER_EVAL_FILE in logs:
            lines += _classifier_section(logs[CLASSIFIER_EVAL_FILE])
        if EXPLAIN_TABLE_FILE in logs:
            lines += _gradcam_section(logs[EXPLAIN_TABLE_FILE], artifacts.gallery, reports)
    except (FruitQualityError, KeyError, ValueError) as e:
        raise ReportError(f"Could not read experiment logs: {e}")

    summary = reports / SUMMARY_FILE
    summary.write_text("\n".join(lines).rstrip("\n") + "\n", encoding="utf-8")
    logger.info(f"Wrote report to {summary}")
    return summary
