"""
Run directories: one per subcommand invocation.

Layout:
    config.json      configuration snapshot, written before any work starts
    metadata.json    artifact version, command, seed, thread count, wall times
    data/            datasets written by datagen, ingest and sample
    checkpoints/     network checkpoints
    samples/         sample grids and Grad-CAM overlays
    logs/            CSV logs and run.log
    reports/         summary.md and charts
"""

# Standard library imports
import json
import logging
import os
import shutil
import time
from pathlib import Path
from typing import Any, Dict, Optional, Union

# Local imports
from .. import __version__
from ..config import RunConfig
from ..exceptions import UsageError

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.json"
METADATA_FILE = "metadata.json"
RUN_LOG_FILE = "run.log"
SUBDIRECTORIES = ("data", "checkpoints", "samples", "logs", "reports")
MANAGED = (CONFIG_FILE, METADATA_FILE) + SUBDIRECTORIES

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

PathLike = Union[str, os.PathLike]


class RunDirectory:
    """Output directory of one experiment run."""

    def __init__(self, path: PathLike):
        self.path = Path(path)
        self.metadata: Dict[str, Any] = {}
        self._handler: Optional[logging.Handler] = None
        self._started = time.perf_counter()

    @classmethod
    def create(
        cls, path: PathLike, config: RunConfig, command: str, overwrite: bool = False
    ) -> "RunDirectory":
        """
        Prepare ``path`` for a new run and snapshot ``config`` into it.

        Raises:
            UsageError: ``path`` already holds a run and ``overwrite`` is not set
        """
        run = cls(path)
        existing = [name for name in MANAGED if (run.path / name).exists()]
        if existing:
            if not overwrite:
                raise UsageError(f"Run directory {run.path} already exists; pass --overwrite to replace it")
            for name in existing:
                target = run.path / name
                if target.is_dir():
                    shutil.rmtree(target)
                else:
                    target.unlink()
            logger.info(f"Replacing run directory {run.path}")
        for name in SUBDIRECTORIES:
            (run.path / name).mkdir(parents=True, exist_ok=True)
        config.save(run.path / CONFIG_FILE)
        run.metadata = {
            "version": __version__,
            "command": command,
            "seed": config.seed,
            "threads": config.threads,
            "wall_time": {},
        }
        run.write_metadata()
        return run

    @classmethod
    def open(cls, path: PathLike) -> "RunDirectory":
        """Open an existing run directory for reading."""
        run = cls(path)
        if not run.path.is_dir():
            raise UsageError(f"Run directory not found: {run.path}")
        metadata = run.path / METADATA_FILE
        if metadata.is_file():
            run.metadata = json.loads(metadata.read_text(encoding="utf-8"))
        return run

    @property
    def data(self) -> Path:
        return self.path / "data"

    @property
    def checkpoints(self) -> Path:
        return self.path / "checkpoints"

    @property
    def samples(self) -> Path:
        return self.path / "samples"

    @property
    def logs(self) -> Path:
        return self.path / "logs"

    @property
    def reports(self) -> Path:
        return self.path / "reports"

    def config(self) -> RunConfig:
        return RunConfig.load(self.path / CONFIG_FILE)

    def attach_log(self, level: int = logging.INFO):
        """Mirror log records into ``logs/run.log`` until ``close``."""
        handler = logging.FileHandler(self.logs / RUN_LOG_FILE, encoding="utf-8")
        handler.setLevel(level)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logging.getLogger().addHandler(handler)
        self._handler = handler

    def record(self, **values: Any):
        self.metadata.update(values)
        self.write_metadata()

    def timed(self, stage: str, seconds: float):
        self.metadata.setdefault("wall_time", {})[stage] = round(seconds, 3)
        self.write_metadata()

    def write_metadata(self):
        (self.path / METADATA_FILE).write_text(
            json.dumps(self.metadata, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

    def close(self, status: str = "completed"):
        self.metadata["status"] = status
        self.timed("total", time.perf_counter() - self._started)
        if self._handler is not None:
            logging.getLogger().removeHandler(self._handler)
            self._handler.close()
            self._handler = None

    def __enter__(self) -> "RunDirectory":
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close("failed" if exc_type is not None else "completed")
        return False
