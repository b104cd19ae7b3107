"""
Run configuration for every experiment stage.

One ``RunConfig`` owns all sections. Values are resolved in this order of precedence:
1. Explicit overrides (command-line flags), given as dotted keys such as ``cgan.epochs``
2. The JSON configuration file
3. Environment variables (FRUIT_QUALITY_*)
4. Default values

Example configuration file:
    {
        "seed": 7,
        "data": {"n": 2000, "resolution": 32},
        "cgan": {"epochs": 300, "batch_size": 64},
        "classifier": {"max_epochs": 100, "patience": 10},
        "search": {"widths": [8, 16, 32, 64, 128]},
        "prune": {"targets": [0.1, 0.5, 0.9]},
        "explain": {"limit": 50}
    }
"""

# Standard library imports
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

# Local imports
from .cgan.trainer import RECOMMENDED_MIN_BATCH, CganConfig
from .classify.search import DEFAULT_SAMPLE_SEED, DEFAULT_SEEDS, DESK_COUNTS, DESK_WIDTHS
from .classify.training import ClassifierConfig
from .data.preprocess import DEFAULT_BG_THRESHOLD
from .data.splits import DEFAULT_FRACTIONS
from .exceptions import ConfigError, FruitQualityError
from .nn.networks import SUPPORTED_GENERATOR_RESOLUTIONS
from .prune.finetune import PruneConfig

logger = logging.getLogger(__name__)

ENV_RUN_ROOT = "FRUIT_QUALITY_RUN_ROOT"
ENV_THREADS = "FRUIT_QUALITY_THREADS"
ENV_LOG_LEVEL = "FRUIT_QUALITY_LOG_LEVEL"
DEFAULT_RUN_ROOT = "runs"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

PathLike = Union[str, os.PathLike]


@dataclass
class DataConfig:
    """Toy generation, ingestion and split settings."""

    n: int = 2000
    resolution: int = 32
    unhealthy_fraction: float = 0.5
    split_fractions: Tuple[float, float, float] = DEFAULT_FRACTIONS
    bg_threshold: float = DEFAULT_BG_THRESHOLD
    category_map: Optional[Dict[str, Optional[str]]] = None

    def __post_init__(self):
        self.split_fractions = tuple(float(f) for f in self.split_fractions)
        if len(self.split_fractions) != 3:
            raise ConfigError(f"data.split_fractions needs three values, got {self.split_fractions}")


@dataclass
class SearchConfig:
    """Width search and augmentation sweep grids."""

    widths: Tuple[int, ...] = DESK_WIDTHS
    seeds: Tuple[int, ...] = DEFAULT_SEEDS
    counts: Tuple[int, ...] = DESK_COUNTS
    sample_seed: int = DEFAULT_SAMPLE_SEED
    train_per_class: Optional[int] = None

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.counts = tuple(int(c) for c in self.counts)


@dataclass
class ExplainConfig:
    """Grad-CAM batch settings."""

    target_layer: Optional[str] = None
    split: str = "test"
    limit: int = 50
    alpha: float = 0.4
    synthetic_per_class: int = 0


@dataclass
class RunConfig:
    """Every section of one experiment run plus the global seed, thread cap and run root."""

    data: DataConfig = field(default_factory=DataConfig)
    cgan: CganConfig = field(default_factory=CganConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    prune: PruneConfig = field(default_factory=PruneConfig)
    explain: ExplainConfig = field(default_factory=ExplainConfig)
    seed: int = 0
    threads: int = 1
    run_root: str = DEFAULT_RUN_ROOT
    log_level: str = "INFO"

    SECTIONS = ("data", "cgan", "classifier", "search", "prune", "explain")

    @staticmethod
    def environment_defaults() -> Dict[str, Any]:
        """
        Top-level values taken from the environment.

        Environment variables:
        - FRUIT_QUALITY_RUN_ROOT: Default parent directory of run directories
        - FRUIT_QUALITY_THREADS: Default worker and BLAS thread cap
        - FRUIT_QUALITY_LOG_LEVEL: Default log level
        """
        threads = os.getenv(ENV_THREADS, "1")
        try:
            threads = int(threads)
        except ValueError:
            raise ConfigError(f"{ENV_THREADS} must be an integer, got {threads!r}")
        return {
            "run_root": os.getenv(ENV_RUN_ROOT, DEFAULT_RUN_ROOT),
            "threads": threads,
            "log_level": os.getenv(ENV_LOG_LEVEL, "INFO").upper(),
        }

    @classmethod
    def from_dict(cls, document: Mapping[str, Any]) -> "RunConfig":
        """
        Build a configuration from a nested mapping.

        Raises:
            ConfigError: unknown keys at any level or values a section rejects
        """
        if not isinstance(document, Mapping):
            raise ConfigError(f"Configuration must be a JSON object, got {type(document).__name__}")
        section_types = {f.name: f.default_factory for f in fields(cls) if f.name in cls.SECTIONS}
        top_level = {f.name for f in fields(cls)} - set(cls.SECTIONS)

        values: Dict[str, Any] = cls.environment_defaults()
        for key, value in document.items():
            if key in section_types:
                values[key] = _build_section(key, section_types[key], value)
            elif key in top_level:
                values[key] = value
            else:
                raise ConfigError(f"Unknown configuration key {key!r}")
        try:
            config = cls(**values)
            config.seed = int(config.seed)
            config.threads = int(config.threads)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid configuration: {e}")
        config.log_level = str(config.log_level).upper()
        return config

    @classmethod
    def load(
        cls, path: Optional[PathLike] = None, overrides: Optional[Mapping[str, Any]] = None
    ) -> "RunConfig":
        """
        Read ``path`` (optional) and apply dotted-key ``overrides`` on top.

        Raises:
            ConfigError: the file is missing or not valid JSON, or a key is unknown
        """
        document: Dict[str, Any] = {}
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise ConfigError(f"Configuration file not found: {path}")
            try:
                document = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as e:
                raise ConfigError(f"Configuration file {path} is not valid JSON: {e}")
            logger.debug(f"Loaded configuration from {path}")
        for dotted, value in (overrides or {}).items():
            if value is None:
                continue
            _set_dotted(document, dotted, value)
        return cls.from_dict(document)

    def to_dict(self) -> Dict[str, Any]:
        document = asdict(self)
        for section in self.SECTIONS:
            for key, value in document[section].items():
                if isinstance(value, tuple):
                    document[section][key] = list(value)
        return document

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def save(self, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    def validate(self) -> Dict[str, Any]:
        """
        Cross-section checks.

        Returns:
            Dict with ``valid``, ``errors`` and ``warnings``
        """
        results: Dict[str, Any] = {"valid": True, "errors": [], "warnings": []}
        errors, warnings = results["errors"], results["warnings"]

        if self.threads < 1:
            errors.append(f"threads must be >= 1, got {self.threads}")
        if self.log_level not in LOG_LEVELS:
            errors.append(f"log_level must be one of {LOG_LEVELS}, got {self.log_level}")

        data = self.data
        if data.n < 2:
            errors.append(f"data.n must be >= 2, got {data.n}")
        if data.resolution < 16 or data.resolution % 8:
            errors.append(f"data.resolution must be a multiple of 8 and >= 16, got {data.resolution}")
        if not 0.0 < data.unhealthy_fraction < 1.0:
            errors.append(f"data.unhealthy_fraction must lie in (0, 1), got {data.unhealthy_fraction}")
        if any(f < 0 for f in data.split_fractions) or abs(sum(data.split_fractions) - 1.0) > 1e-9:
            errors.append(f"data.split_fractions must be non-negative and sum to 1, got {data.split_fractions}")

        if self.cgan.resolution not in SUPPORTED_GENERATOR_RESOLUTIONS:
            errors.append(
                f"cgan.resolution must be one of {SUPPORTED_GENERATOR_RESOLUTIONS}, got {self.cgan.resolution}"
            )
        elif self.cgan.resolution != data.resolution:
            warnings.append(
                f"cgan.resolution {self.cgan.resolution} differs from data.resolution {data.resolution}; "
                "the dataset resolution is used"
            )
        if self.cgan.batch_size < RECOMMENDED_MIN_BATCH:
            warnings.append(
                f"cgan.batch_size {self.cgan.batch_size} is below {RECOMMENDED_MIN_BATCH}; "
                "discriminator batch statistics will be noisy"
            )

        search = self.search
        if not search.widths or min(search.widths) < 1:
            errors.append(f"search.widths must be positive, got {list(search.widths)}")
        if not search.seeds:
            errors.append("search.seeds must not be empty")
        if not search.counts or min(search.counts) < 0:
            errors.append(f"search.counts must be non-negative, got {list(search.counts)}")
        elif 0 not in search.counts:
            warnings.append("search.counts has no 0 entry; the augmentation table will have no baseline")
        if search.train_per_class is not None and search.train_per_class < 1:
            errors.append(f"search.train_per_class must be >= 1, got {search.train_per_class}")

        if self.explain.limit < 1:
            errors.append(f"explain.limit must be >= 1, got {self.explain.limit}")
        if not 0.0 <= self.explain.alpha <= 1.0:
            errors.append(f"explain.alpha must lie in [0, 1], got {self.explain.alpha}")
        if self.explain.split not in ("train", "val", "test", "all"):
            errors.append(f"explain.split must be train, val, test or all, got {self.explain.split}")
        if self.explain.synthetic_per_class < 0:
            errors.append(f"explain.synthetic_per_class must be >= 0, got {self.explain.synthetic_per_class}")

        results["valid"] = len(errors) == 0
        return results

    @staticmethod
    def configuration_help() -> str:
        """Help text printed by ``fruit-quality --help-config``."""
        return f"""
Fruit Quality Configuration Help
================================

Every subcommand reads the same JSON document. Each value is resolved as:
1. Command-line flags
2. The file passed with --config
3. Environment variables
4. Defaults

Sections:
---------

    data        n, resolution, unhealthy_fraction, split_fractions, bg_threshold, category_map
    cgan        epochs, batch_size, latent_dim, embed_dim, resolution, checkpoint_interval,
                seed, lr, beta1, beta2, saturating_generator_loss, samples_per_class,
                grid_columns
    classifier  interpretation_width, max_epochs, patience, batch_size, lr, beta1, beta2
    search      widths, seeds, counts, sample_seed, train_per_class
    prune       targets, epochs, power, initial_sparsity, scope, sparse_checkpoints
    explain     target_layer, split, limit, alpha, synthetic_per_class

Top-level keys: seed, threads, run_root, log_level. Unknown keys are rejected.

Environment Variables:
---------------------

    {ENV_RUN_ROOT}={DEFAULT_RUN_ROOT}
    {ENV_THREADS}=1
    {ENV_LOG_LEVEL}=INFO

Quick Start:
-----------
1. fruit-quality datagen --out runs/data
2. fruit-quality train-cgan --data runs/data/data --out runs/cgan
3. fruit-quality width-search --data runs/data/data --out runs/width
4. fruit-quality report runs/cgan runs/width

Each run directory holds config.json; pass it back with --config to reproduce the run.
        """


def _build_section(name: str, section_type: type, value: Any):
    if not isinstance(value, Mapping):
        raise ConfigError(f"Section {name!r} must be an object, got {type(value).__name__}")
    known = {f.name for f in fields(section_type)}
    for key in value:
        if key not in known:
            raise ConfigError(f"Unknown configuration key '{name}.{key}'")
    try:
        return section_type(**value)
    except ConfigError:
        raise
    except (FruitQualityError, TypeError, ValueError) as e:
        raise ConfigError(f"Invalid {name} section: {e}")


def _set_dotted(document: Dict[str, Any], dotted: str, value: Any):
    parts = dotted.split(".")
    if len(parts) > 2:
        raise ConfigError(f"Unknown configuration key {dotted!r}")
    target = document
    if len(parts) == 2:
        section = document.setdefault(parts[0], {})
        if not isinstance(section, dict):
            raise ConfigError(f"Cannot set {dotted!r}: {parts[0]!r} is not a section")
        target = section
    target[parts[-1]] = value
