"""
Exception hierarchy for the fruit quality pipeline.

Library code raises these; only the command line layer catches them and maps
them to exit codes.
"""


class FruitQualityError(Exception):
    """Base class for every error raised by this package."""


class TensorError(FruitQualityError):
    """Invalid tensor construction or operator use."""


class ShapeError(TensorError, ValueError):
    """Operand shapes do not agree."""


class GradientError(TensorError):
    """Reverse pass could not be run for the requested loss."""


class CheckpointError(FruitQualityError):
    """Malformed or mismatched checkpoint file."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint carries a format version this build cannot read."""


class OptimizerError(FruitQualityError, ValueError):
    """Invalid optimizer input such as a non-finite gradient."""


class DataError(FruitQualityError):
    """Problems with image data, annotations or dataset bookkeeping."""


class CocoError(DataError):
    """COCO annotation file cannot be turned into a dataset."""


class PngError(DataError):
    """PNG file is malformed or cannot be written."""


class UnsupportedDepthError(PngError):
    """PNG uses a bit depth other than 8."""


class SplitError(DataError, ValueError):
    """Requested split is impossible for the dataset."""


class TrainingError(FruitQualityError):
    """Training loop aborted (non-finite loss, degenerate data)."""


class ConfigError(FruitQualityError):
    """Configuration document is missing, unreadable or invalid."""


class ReportError(FruitQualityError):
    """Report cannot be generated from the run directory."""


class UsageError(FruitQualityError):
    """Command line used incorrectly."""


class PruningError(FruitQualityError, ValueError):
    """Sparsity target or schedule position out of range."""
