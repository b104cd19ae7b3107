"""
Conditional GAN training loop.

Every batch of b real images runs one discriminator step on the b real images and
b generated images carrying the same labels, then one generator step on b fresh
latents with uniformly drawn labels, scored by the discriminator with its
parameters detached.
"""

# Standard library imports
import csv
import io
import logging
import math
import os
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Tuple, Union

# Third-party imports
import numpy as np

# Local imports
from ..data.dataset import HEALTHY, UNHEALTHY, Dataset
from ..exceptions import ConfigError, DataError, TrainingError
from ..nn.checkpoint import save_checkpoint
from ..nn.init import ParameterSet
from ..nn.networks import DiscriminatorNet, GeneratorNet, build_discriminator, build_generator
from ..optim.adam import AdamState, adam_step, named_gradients
from ..optim.losses import discriminator_loss, generator_loss
from ..tensor import Tape
from .sampling import emit_sample_grid, sample

logger = logging.getLogger(__name__)

RECOMMENDED_MIN_BATCH = 64
LOSS_LOG_COLUMNS = ("epoch", "g_loss", "d_loss_real", "d_loss_fake")
LOSS_LOG_FILE = "cgan_loss.csv"
_SEED_MASK = (1 << 63) - 1

PathLike = Union[str, os.PathLike]


@dataclass
class CganConfig:
    """Hyperparameters of one conditional GAN run."""

    epochs: int = 300
    batch_size: int = 64
    latent_dim: int = 100
    embed_dim: int = 50
    resolution: int = 32
    checkpoint_interval: int = 50
    seed: int = 0
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    saturating_generator_loss: bool = False
    samples_per_class: int = 18
    grid_columns: int = 6

    def __post_init__(self):
        for name in ("epochs", "batch_size", "latent_dim", "embed_dim", "checkpoint_interval"):
            if getattr(self, name) < 1:
                raise ConfigError(f"cgan.{name} must be >= 1, got {getattr(self, name)}")


@dataclass(frozen=True)
class LossRow:
    epoch: int
    g_loss: float
    d_loss_real: float
    d_loss_fake: float

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.g_loss, self.d_loss_real, self.d_loss_fake))


@dataclass
class LossLog:
    """Per-epoch mean losses, one row per completed epoch."""

    rows: List[LossRow] = field(default_factory=list)

    def append(self, row: LossRow):
        if not row.is_finite():
            raise TrainingError(f"Non-finite loss at epoch {row.epoch}: {row}")
        if self.rows and row.epoch != self.rows[-1].epoch + 1:
            raise TrainingError(f"Loss rows must be consecutive, got epoch {row.epoch}")
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def final(self) -> LossRow:
        if not self.rows:
            raise TrainingError("Loss log is empty")
        return self.rows[-1]

    def lowest_generator_loss(self) -> Tuple[int, float]:
        """(epoch, g_loss) of the lowest generator loss; the earliest epoch wins ties."""
        if not self.rows:
            raise TrainingError("Loss log is empty")
        best = min(self.rows, key=lambda row: (row.g_loss, row.epoch))
        return best.epoch, best.g_loss

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(LOSS_LOG_COLUMNS)
        for row in self.rows:
            writer.writerow(
                [row.epoch, f"{row.g_loss:.9g}", f"{row.d_loss_real:.9g}", f"{row.d_loss_fake:.9g}"]
            )
        return buffer.getvalue()

    def write_csv(self, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv(), encoding="utf-8")
        return path

    @classmethod
    def read_csv(cls, path: PathLike) -> "LossLog":
        log = cls()
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            if tuple(reader.fieldnames or ()) != LOSS_LOG_COLUMNS:
                raise TrainingError(f"{path}: unexpected loss log columns {reader.fieldnames}")
            for record in reader:
                log.append(
                    LossRow(
                        epoch=int(record["epoch"]),
                        g_loss=float(record["g_loss"]),
                        d_loss_real=float(record["d_loss_real"]),
                        d_loss_fake=float(record["d_loss_fake"]),
                    )
                )
        return log


@dataclass(frozen=True)
class CheckpointRecord:
    epoch: int
    generator: Path
    discriminator: Path
    grid: Path


@dataclass
class CganResult:
    generator: GeneratorNet
    discriminator: DiscriminatorNet
    loss_log: LossLog
    checkpoints: List[CheckpointRecord] = field(default_factory=list)
    discriminator_updates: int = 0
    generator_updates: int = 0


def _detached(params: ParameterSet) -> ParameterSet:
    return OrderedDict((name, tensor.detach()) for name, tensor in params.items())


def _check_finite(value: float, what: str, epoch: int):
    if not math.isfinite(value):
        logger.error(f"{what} became {value} at epoch {epoch}; aborting")
        raise TrainingError(f"Non-finite {what} at epoch {epoch}")


def checkpoint_epochs(cfg: CganConfig) -> List[int]:
    """Epochs at which checkpoints are written: every interval plus the final epoch."""
    epochs = list(range(cfg.checkpoint_interval, cfg.epochs + 1, cfg.checkpoint_interval))
    if not epochs or epochs[-1] != cfg.epochs:
        epochs.append(cfg.epochs)
    return epochs


def write_checkpoint(
    out_dir: PathLike, epoch: int, gen: GeneratorNet, disc: DiscriminatorNet, cfg: CganConfig
) -> CheckpointRecord:
    out_dir = Path(out_dir)
    gen_path = save_checkpoint(gen.params, out_dir / "checkpoints" / f"generator_epoch_{epoch:05d}.fqck")
    disc_path = save_checkpoint(
        disc.params, out_dir / "checkpoints" / f"discriminator_epoch_{epoch:05d}.fqck"
    )
    labels = [HEALTHY] * cfg.samples_per_class + [UNHEALTHY] * cfg.samples_per_class
    images = sample(gen, labels, seed=cfg.seed)
    grid_path = emit_sample_grid(
        images, cfg.grid_columns, out_dir / "samples" / f"grid_epoch_{epoch:05d}.png"
    )
    logger.info(f"Checkpoint for epoch {epoch} written to {gen_path.parent}")
    return CheckpointRecord(epoch, gen_path, disc_path, grid_path)


def train_cgan(
    train_data: Dataset,
    cfg: CganConfig,
    out_dir: Optional[PathLike] = None,
    on_epoch: Optional[Callable[[LossRow], None]] = None,
    on_step: Optional[Callable[[str, GeneratorNet, DiscriminatorNet], None]] = None,
) -> CganResult:
    """
    Train a conditional generator/discriminator pair.

    Args:
        train_data: Images at ``cfg.resolution`` containing both classes
        cfg: Run hyperparameters
        out_dir: When given, receives checkpoints/, samples/ and logs/cgan_loss.csv
        on_epoch: Called with each completed epoch's loss row
        on_step: Called after every half-step with "discriminator" or "generator"
            and the current networks

    Returns:
        CganResult with the final networks, the loss log and the checkpoint records

    Raises:
        DataError: single-class data or a resolution mismatch
        TrainingError: a loss becomes NaN or infinite
    """
    if len(train_data) == 0 or not train_data.has_both_classes():
        raise DataError(f"cGAN training data must contain both classes, got {train_data.class_counts()}")
    if train_data.resolution != cfg.resolution:
        raise DataError(
            f"Training images are {train_data.resolution}px but the cGAN is configured for "
            f"{cfg.resolution}px"
        )
    if cfg.batch_size < RECOMMENDED_MIN_BATCH:
        logger.warning(
            f"Batch size {cfg.batch_size} is below {RECOMMENDED_MIN_BATCH}; "
            "small batches have been observed to stall generator training"
        )

    seed = int(cfg.seed) & _SEED_MASK
    gen = build_generator(cfg.latent_dim, cfg.embed_dim, cfg.resolution, seed=seed * 4 + 1)
    disc = build_discriminator(cfg.resolution, embed_dim=cfg.embed_dim, seed=seed * 4 + 2)
    rng = np.random.default_rng([seed, 3])
    g_state = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
    d_state = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)

    images = train_data.images
    labels = train_data.labels
    n = len(train_data)
    result = CganResult(gen, disc, LossLog())
    save_at = set(checkpoint_epochs(cfg))
    logger.info(
        f"Training cGAN on {n} images for {cfg.epochs} epochs (batch {cfg.batch_size}, seed {cfg.seed})"
    )

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        totals = np.zeros(3)
        batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            b = idx.size
            real, y = images[idx], labels[idx]

            fake = gen.forward(rng.standard_normal((b, cfg.latent_dim)), y).detach()
            with Tape() as tape:
                d_losses = discriminator_loss(disc.forward(real, y), disc.forward(fake, y))
            _check_finite(d_losses.total.item(), "discriminator loss", epoch)
            d_params, d_state = adam_step(
                disc.params, named_gradients(tape, d_losses.total, disc.params), d_state
            )
            disc = disc.with_params(d_params)
            result.discriminator_updates += 1
            if on_step is not None:
                on_step("discriminator", gen, disc)

            z = rng.standard_normal((b, cfg.latent_dim))
            y_gen = rng.integers(0, 2, size=b)
            frozen = _detached(disc.params)
            with Tape() as tape:
                logits = disc.forward(gen.forward(z, y_gen), y_gen, params=frozen)
                g_loss = generator_loss(logits, saturating=cfg.saturating_generator_loss)
            _check_finite(g_loss.item(), "generator loss", epoch)
            g_params, g_state = adam_step(gen.params, named_gradients(tape, g_loss, gen.params), g_state)
            gen = gen.with_params(g_params)
            result.generator_updates += 1
            if on_step is not None:
                on_step("generator", gen, disc)

            totals += (g_loss.item(), d_losses.real.item(), d_losses.fake.item())
            batches += 1

        means = totals / batches
        row = LossRow(epoch, float(means[0]), float(means[1]), float(means[2]))
        result.loss_log.append(row)
        logger.info(
            f"cGAN epoch {epoch}/{cfg.epochs}: g_loss={row.g_loss:.4f} "
            f"d_loss_real={row.d_loss_real:.4f} d_loss_fake={row.d_loss_fake:.4f}"
        )
        if on_epoch is not None:
            on_epoch(row)

        if out_dir is not None and epoch in save_at:
            result.checkpoints.append(write_checkpoint(out_dir, epoch, gen, disc, cfg))
            result.loss_log.write_csv(Path(out_dir) / "logs" / LOSS_LOG_FILE)

    result.generator = gen
    result.discriminator = disc
    lowest_epoch, lowest = result.loss_log.lowest_generator_loss()
    logger.info(
        f"cGAN finished: final g_loss={result.loss_log.final().g_loss:.4f}, "
        f"lowest g_loss={lowest:.4f} at epoch {lowest_epoch}"
    )
    return result


