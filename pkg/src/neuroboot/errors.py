"""Exception taxonomy shared across the package."""


class NeurobootError(Exception):
    """Base class for all package errors."""


class FileFormatError(NeurobootError):
    """Epoch file is malformed (bad magic, truncated payload, invalid header)."""


class DimensionMismatchError(NeurobootError):
    """Declared dimensions disagree with the actual payload."""


class NonFiniteDataError(NeurobootError):
    """Data contains NaN or Inf values."""


class UnknownLabelCodeError(NeurobootError):
    """A trial label code is outside the known taxonomy."""


class EmptyWindowError(NeurobootError):
    """A time window does not intersect the epoch span."""


class DegenerateBaselineError(NeurobootError):
    """A trial/channel baseline has zero variance and cannot be used for scaling."""


class DegenerateClassError(NeurobootError):
    """A class has too few (or zero) trials for the requested operation."""


class DegenerateDenominatorError(NeurobootError):
    """A ratio denominator is exactly zero."""


class DegenerateSampleError(NeurobootError):
    """A paired sample has zero-variance differences."""


class ConfigError(NeurobootError):
    """An invalid configuration value or document."""
