"""
Binary classifier training with early stopping on validation accuracy.
"""

# Standard library imports
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

# Third-party imports
import numpy as np

# Local imports
from ..data.dataset import Dataset
from ..exceptions import ConfigError, DataError, TrainingError
from ..nn.init import ParameterSet
from ..nn.networks import ClassifierNet, build_classifier
from ..optim.adam import AdamState, adam_step, named_gradients
from ..optim.early_stopping import EarlyStopState, StopDecision, early_stop_update
from ..optim.losses import bce_loss
from ..tensor import Tape, Tensor
from .evaluation import require_all_real, score

logger = logging.getLogger(__name__)

_SEED_MASK = (1 << 63) - 1


@dataclass
class ClassifierConfig:
    """Classifier training hyperparameters."""

    interpretation_width: int = 128
    max_epochs: int = 100
    patience: int = 10
    batch_size: int = 32
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999

    def __post_init__(self):
        for name in ("interpretation_width", "max_epochs", "patience", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"classifier.{name} must be >= 1, got {getattr(self, name)}")
        if self.lr <= 0:
            raise ConfigError(f"classifier.lr must be positive, got {self.lr}")


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float


@dataclass
class TrainRunRecord:
    """Outcome of one classifier run; wall time is excluded from equality."""

    config: Dict[str, Any]
    width: int
    seed: int
    epochs_run: int
    best_epoch: int
    final_val_accuracy: float
    history: List[EpochMetrics] = field(default_factory=list)
    train_size: int = 0
    val_size: int = 0
    wall_time: float = field(default=0.0, compare=False)


EpochCallback = Callable[[EpochMetrics, ClassifierNet], None]
MetricHook = Callable[[int, float], float]


def _require_both_classes(dataset: Dataset, role: str):
    if len(dataset) == 0 or not dataset.has_both_classes():
        raise DataError(f"The {role} split must contain both classes, got {dataset.class_counts()}")


def _mean_bce(probabilities: np.ndarray, labels: np.ndarray) -> float:
    loss = bce_loss(Tensor(probabilities.reshape(-1, 1)), labels.reshape(-1, 1).astype(np.float64))
    return loss.item()


def fit_epoch(
    model: ClassifierNet,
    params: ParameterSet,
    state: AdamState,
    data: Dataset,
    batch_size: int,
    rng: np.random.Generator,
    after_step: Optional[Callable[[ParameterSet], ParameterSet]] = None,
) -> Tuple[ParameterSet, AdamState, float, float]:
    """
    One shuffled pass of Adam + BCE over ``data``.

    Args:
        after_step: Applied to the parameters after every optimizer step (pruning masks)

    Returns:
        (params, state, mean train loss, train accuracy)
    """
    order = rng.permutation(len(data))
    losses, correct = [], 0
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        x = data.images[idx]
        y = data.labels[idx].reshape(-1, 1)
        with Tape() as tape:
            probs = model.forward(x, params)
            loss = bce_loss(probs, y.astype(np.float64))
        value = loss.item()
        if not math.isfinite(value):
            logger.error(f"Classifier loss became {value}; aborting")
            raise TrainingError("Non-finite classifier loss")
        params, state = adam_step(params, named_gradients(tape, loss, params), state)
        if after_step is not None:
            params = after_step(params)
        losses.append(value * idx.size)
        correct += int(np.sum((probs.data >= 0.5).astype(np.int64) == y))
    return params, state, float(np.sum(losses) / len(order)), correct / len(order)


def train_classifier(
    train: Dataset,
    val: Dataset,
    width: int,
    seed: int,
    cfg: Optional[ClassifierConfig] = None,
    initial: Optional[ClassifierNet] = None,
    on_epoch: Optional[EpochCallback] = None,
    metric_hook: Optional[MetricHook] = None,
) -> Tuple[ClassifierNet, TrainRunRecord]:
    """
    Train a classifier and return the parameters of its best validation epoch.

    Args:
        train: Training split; may contain synthetic images
        val: Validation split; must be all real
        width: Interpretation layer width
        seed: Seeds the initial parameters and the batch order
        cfg: Training hyperparameters; ``cfg.interpretation_width`` is ignored in favour of ``width``
        initial: Start from this network (for example one with an external backbone)
        on_epoch: Called after each epoch with its metrics and the current network
        metric_hook: Maps (epoch, measured val accuracy) to the value early stopping sees

    Raises:
        DataError: a split lacks a class or validation contains synthetic images
        TrainingError: the training loss becomes NaN or infinite
    """
    cfg = cfg or ClassifierConfig()
    _require_both_classes(train, "training")
    _require_both_classes(val, "validation")
    require_all_real(val, "validation")

    started = time.perf_counter()
    seed = int(seed) & _SEED_MASK
    model = initial if initial is not None else build_classifier(train.resolution, width, seed=seed)
    if model.resolution != train.resolution or model.interpretation_width != width:
        raise DataError(
            f"Model ({model.resolution}px, width {model.interpretation_width}) does not match "
            f"data ({train.resolution}px) and width {width}"
        )
    rng = np.random.default_rng([seed, 1])
    state = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
    stopper = EarlyStopState(patience=cfg.patience, max_epochs=cfg.max_epochs)
    params = model.params
    best_params = params
    history: List[EpochMetrics] = []

    while True:
        epoch = len(history) + 1
        params, state, train_loss, train_acc = fit_epoch(model, params, state, train, cfg.batch_size, rng)
        current = model.with_params(params)
        val_probs = current.predict_proba(val.images)
        metrics = EpochMetrics(
            epoch=epoch,
            train_loss=train_loss,
            train_accuracy=train_acc,
            val_loss=_mean_bce(val_probs, val.labels),
            val_accuracy=score(val.labels, val_probs).accuracy,
        )
        history.append(metrics)
        logger.info(
            f"Classifier width {width} seed {seed} epoch {epoch}: train_loss={train_loss:.4f} "
            f"train_acc={train_acc:.4f} val_acc={metrics.val_accuracy:.4f}"
        )
        if on_epoch is not None:
            on_epoch(metrics, current)
        observed = metric_hook(epoch, metrics.val_accuracy) if metric_hook else metrics.val_accuracy
        decision = early_stop_update(stopper, observed)
        if stopper.best_epoch == epoch:
            best_params = params
        if decision is StopDecision.STOP:
            break

    best = model.with_params(best_params)
    record = TrainRunRecord(
        config=asdict(cfg),
        width=width,
        seed=seed,
        epochs_run=len(history),
        best_epoch=stopper.best_epoch,
        final_val_accuracy=history[stopper.best_epoch - 1].val_accuracy,
        history=history,
        train_size=len(train),
        val_size=len(val),
        wall_time=time.perf_counter() - started,
    )
    return best, record
