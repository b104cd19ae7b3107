"""
Entry point of the ``fruit-quality`` console script.

Exit codes: 0 on success, 1 on usage or configuration errors, 2 on runtime errors.
"""

# Standard library imports
import argparse
import logging
import sys
from typing import Dict, List, Optional

# Third-party imports
from threadpoolctl import threadpool_limits

# Local imports
from .. import __version__
from ..config import LOG_LEVELS, RunConfig
from ..exceptions import ConfigError, FruitQualityError, UsageError
from .commands import add_commands, overrides_from_args
from .rundir import LOG_FORMAT

logger = logging.getLogger(__name__)

TOP_LEVEL_FLAGS = ("seed", "threads", "log_level")


class ArgumentParser(argparse.ArgumentParser):
    """Raises UsageError instead of exiting so ``main`` owns the exit code."""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="fruit-quality",
        description="Synthetic data, classification, Grad-CAM and pruning experiments for fruit quality.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--threads", type=int, help="Worker and BLAS thread cap")
    parser.add_argument("--log-level", type=str.upper, choices=LOG_LEVELS)
    parser.add_argument("--help-config", action="store_true", help="Describe the configuration file and exit")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    parser.set_defaults(handlers=add_commands(subparsers))
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, object]:
    overrides = overrides_from_args(args)
    for name in TOP_LEVEL_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return overrides


def configure_logging(level: str):
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)
    logging.getLogger().setLevel(level)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.help_config:
            print(RunConfig.configuration_help())
            return 0
        if args.command is None:
            raise UsageError("no command given")

        config = RunConfig.load(args.config, _overrides(args))
        configure_logging(config.log_level)
        validation = config.validate()
        for warning in validation["warnings"]:
            logger.warning(warning)
        if not validation["valid"]:
            raise ConfigError("; ".join(validation["errors"]))

        with threadpool_limits(limits=config.threads):
            return args.handlers[args.command](args, config)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (FruitQualityError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
