"""Exception types shared across the package.

Each class maps to one CLI exit code so callers can classify failures
from a single stderr line.
"""


class StanceNetError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1
    prefix = "error"


class ShapeError(StanceNetError):
    """Tensor shapes incompatible with the requested operation."""

    exit_code = 3
    prefix = "shape"


class DataError(StanceNetError):
    """Bad input data: files, records, labels, configuration."""

    exit_code = 3
    prefix = "data"


class FormatError(DataError):
    """Malformed binary file (magic, version, truncation, dims)."""

    prefix = "format"


class NumericError(StanceNetError):
    """A computation produced NaN or Inf values."""

    exit_code = 4
    prefix = "numeric"


class GradientError(StanceNetError):
    """Reverse pass invoked on an invalid graph or produced NaN."""

    exit_code = 4
    prefix = "gradient"


class DivergenceError(StanceNetError):
    """Training loss became NaN or infinite."""

    exit_code = 4
    prefix = "divergence"
