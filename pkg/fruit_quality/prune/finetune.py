"""
Pruning with fine-tuning, target sweeps and the size/accuracy table.
"""

# Standard library imports
import csv
import io
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

# Third-party imports
import numpy as np

# Local imports
from ..classify.evaluation import require_all_real, score
from ..classify.training import ClassifierConfig, fit_epoch
from ..data.dataset import Dataset
from ..exceptions import DataError, PruningError
from ..nn.checkpoint import save_sparse_checkpoint
from ..nn.networks import ClassifierNet
from ..optim.adam import AdamState
from .masking import SCOPES, MaskedModel, PruneEpoch, apply_magnitude_mask, apply_masks
from .schedule import PruningSchedule, sparsity_at

logger = logging.getLogger(__name__)

DESK_TARGETS = (0.1, 0.3, 0.5, 0.7, 0.9)
PRUNE_TABLE_FILE = "pruning.csv"
PRUNE_COLUMNS = ("size_percent", "final_sparsity", "accuracy", "achieved_sparsity")
MERGED_COLUMNS = ("size_percent", "final_sparsity", "accuracy_vanilla", "accuracy_augmented")

_SEED_MASK = (1 << 63) - 1

PathLike = Union[str, os.PathLike]


@dataclass
class PruneConfig:
    """Pruning sweep settings."""

    targets: Tuple[float, ...] = DESK_TARGETS
    epochs: int = 20
    power: float = 3.0
    initial_sparsity: float = 0.0
    scope: str = "tensor"
    sparse_checkpoints: bool = True

    def __post_init__(self):
        self.targets = tuple(float(t) for t in self.targets)
        for target in self.targets:
            if not 0.0 <= target < 1.0:
                raise PruningError(f"prune.targets must lie in [0, 1), got {target}")
        if self.scope not in SCOPES:
            raise PruningError(f"prune.scope must be one of {SCOPES}, got {self.scope!r}")
        # Validates epochs, power and initial sparsity for the strictest target.
        self.schedule(max(self.targets, default=self.initial_sparsity))

    def schedule(self, final_sparsity: float) -> PruningSchedule:
        return PruningSchedule(
            final_sparsity=final_sparsity,
            initial_sparsity=min(self.initial_sparsity, final_sparsity),
            epochs=self.epochs,
            power=self.power,
        )


def _check_splits(train: Dataset, val: Dataset):
    for role, data in (("training", train), ("validation", val)):
        if len(data) == 0 or not data.has_both_classes():
            raise DataError(f"The {role} split must contain both classes, got {data.class_counts()}")
    require_all_real(val, "validation")


def _val_accuracy(model: ClassifierNet, val: Dataset) -> float:
    return score(val.labels, model.predict_proba(val.images)).accuracy


def prune_finetune(
    model: ClassifierNet,
    train: Dataset,
    val: Dataset,
    sched: PruningSchedule,
    seed: int,
    cfg: Optional[ClassifierConfig] = None,
    scope: str = "tensor",
) -> Tuple[MaskedModel, float]:
    """
    Fine-tune ``model`` while ramping its sparsity along ``sched``.

    Epoch t (1..T) first grows the mask to ``sparsity_at(t, sched)`` and then runs
    one Adam epoch, zeroing the masked weights after every step. The input model is
    not modified.

    Returns:
        (masked model after epoch T, its validation accuracy)

    Raises:
        DataError: a split lacks a class or validation contains synthetic images
        TrainingError: the loss becomes NaN or infinite
    """
    cfg = cfg or ClassifierConfig()
    _check_splits(train, val)
    rng = np.random.default_rng([int(seed) & _SEED_MASK, 2])
    state = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)

    masked = apply_magnitude_mask(model, sparsity_at(0, sched), scope=scope)
    for epoch in range(1, sched.epochs + 1):
        target = sparsity_at(epoch, sched)
        masked = apply_magnitude_mask(masked.model, target, previous=masked, scope=scope)
        masks = masked.masks
        params, state, train_loss, _ = fit_epoch(
            masked.model,
            masked.params,
            state,
            train,
            cfg.batch_size,
            rng,
            after_step=lambda p: apply_masks(p, masks),
        )
        masked = MaskedModel(masked.model.with_params(params), masks, scope, masked.history)
        if not masked.masked_weights_are_zero():
            raise PruningError(f"Masked weights drifted from zero in epoch {epoch}")
        val_acc = _val_accuracy(masked.model, val)
        masked.history.append(
            PruneEpoch(epoch, target, masked.weight_sparsity(), train_loss, val_acc)
        )
        logger.info(
            f"Prune epoch {epoch}/{sched.epochs}: target={target:.4f} "
            f"achieved={masked.weight_sparsity():.4f} loss={train_loss:.4f} val_acc={val_acc:.4f}"
        )

    accuracy = masked.history[-1].val_accuracy
    return masked, accuracy


def finetune(
    model: ClassifierNet,
    train: Dataset,
    val: Dataset,
    epochs: int,
    seed: int,
    cfg: Optional[ClassifierConfig] = None,
) -> Tuple[ClassifierNet, float]:
    """Unmasked fine-tuning with the batch order ``prune_finetune`` uses."""
    cfg = cfg or ClassifierConfig()
    _check_splits(train, val)
    rng = np.random.default_rng([int(seed) & _SEED_MASK, 2])
    state = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
    params = model.params
    for _ in range(epochs):
        params, state, _, _ = fit_epoch(model, params, state, train, cfg.batch_size, rng)
    tuned = model.with_params(params)
    return tuned, _val_accuracy(tuned, val)


@dataclass(frozen=True)
class PruningRow:
    final_sparsity: float
    achieved_sparsity: float
    size_percent: float
    accuracy: float


@dataclass
class PruningTable:
    """Accuracy per final sparsity for one model variant, sorted by sparsity."""

    variant: str = "vanilla"
    rows: List[PruningRow] = field(default_factory=list)
    baseline_accuracy: Optional[float] = None
    metadata: Dict[str, Any] = field(default_factory=dict, compare=False)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(PRUNE_COLUMNS)
        for row in self.rows:
            writer.writerow(
                [
                    f"{row.size_percent:.2f}",
                    f"{row.final_sparsity:.4f}",
                    f"{row.accuracy:.6f}",
                    f"{row.achieved_sparsity:.6f}",
                ]
            )
        return buffer.getvalue()

    def write_csv(self, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv(), encoding="utf-8")
        return path

    @classmethod
    def read_csv(cls, path: PathLike, variant: str = "vanilla") -> "PruningTable":
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            if tuple(reader.fieldnames or ()) != PRUNE_COLUMNS:
                raise DataError(f"{path} is not a pruning table (columns {reader.fieldnames})")
            rows = [
                PruningRow(
                    final_sparsity=float(r["final_sparsity"]),
                    achieved_sparsity=float(r["achieved_sparsity"]),
                    size_percent=float(r["size_percent"]),
                    accuracy=float(r["accuracy"]),
                )
                for r in reader
            ]
        return cls(variant=variant, rows=rows)


def pruning_sweep(
    model: ClassifierNet,
    train: Dataset,
    val: Dataset,
    targets: Sequence[float],
    seed: int,
    prune_cfg: Optional[PruneConfig] = None,
    cfg: Optional[ClassifierConfig] = None,
    workers: Optional[int] = None,
    out_dir: Optional[PathLike] = None,
    variant: str = "vanilla",
) -> PruningTable:
    """
    One ``prune_finetune`` per target, each from a fresh copy of ``model``.

    With ``out_dir``, writes ``logs/pruning_<variant>.csv`` and, when enabled, one
    sparse checkpoint per target under ``checkpoints/``.
    """
    prune_cfg = prune_cfg or PruneConfig()
    ordered = sorted({float(t) for t in targets})
    for target in ordered:
        if not 0.0 <= target < 1.0:
            raise PruningError(f"Pruning target must lie in [0, 1), got {target}")

    table = PruningTable(
        variant=variant,
        metadata={
            "train_size": len(train),
            "train_all_real": train.is_all_real(),
            "scope": prune_cfg.scope,
            "epochs": prune_cfg.epochs,
            "power": prune_cfg.power,
        },
    )
    if not ordered:
        return table
    table.baseline_accuracy = _val_accuracy(model, val)
    logger.info(f"Pruning sweep ({variant}) over targets {ordered}")

    def run(target: float) -> PruningRow:
        masked, accuracy = prune_finetune(
            model.copy(), train, val, prune_cfg.schedule(target), seed, cfg, prune_cfg.scope
        )
        if out_dir is not None and prune_cfg.sparse_checkpoints:
            save_sparse_checkpoint(
                masked.params,
                Path(out_dir) / "checkpoints" / f"pruned_{variant}_s{round(target * 100):03d}.fqck",
            )
        return PruningRow(
            final_sparsity=target,
            achieved_sparsity=masked.weight_sparsity(),
            size_percent=masked.size_percent(),
            accuracy=accuracy,
        )

    if workers and workers > 1 and len(ordered) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            table.rows = list(pool.map(run, ordered))
    else:
        table.rows = [run(target) for target in ordered]

    if out_dir is not None:
        table.write_csv(Path(out_dir) / "logs" / f"pruning_{variant}.csv")
    return table


def merge_pruning_tables(
    vanilla: Optional[PruningTable] = None, augmented: Optional[PruningTable] = None
) -> str:
    """Side-by-side CSV of two variants keyed by final sparsity; missing cells are empty."""
    by_sparsity: Dict[float, Dict[str, PruningRow]] = {}
    for name, table in (("vanilla", vanilla), ("augmented", augmented)):
        for row in table.rows if table is not None else []:
            by_sparsity.setdefault(round(row.final_sparsity, 6), {})[name] = row

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(MERGED_COLUMNS)
    for sparsity in sorted(by_sparsity):
        cells = by_sparsity[sparsity]
        size = (cells.get("vanilla") or cells["augmented"]).size_percent
        writer.writerow(
            [
                f"{size:.2f}",
                f"{sparsity:.4f}",
                f"{cells['vanilla'].accuracy:.6f}" if "vanilla" in cells else "",
                f"{cells['augmented'].accuracy:.6f}" if "augmented" in cells else "",
            ]
        )
    return buffer.getvalue()

