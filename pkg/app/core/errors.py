"""Error hierarchy. Every error carries the CLI exit code it maps to (2, 3 or 4)."""


class LoTeNetError(Exception):
    exit_code = 2


# Usage / configuration (exit 2)
class ConfigError(LoTeNetError):
    exit_code = 2


class MissingFileError(LoTeNetError):
    exit_code = 2


class FormatError(LoTeNetError):
    exit_code = 2


class ChecksumError(FormatError):
    pass


class SplitError(ConfigError):
    pass


# Numerical divergence (exit 3)
class DivergenceError(LoTeNetError):
    exit_code = 3


class NonFiniteError(DivergenceError):
    pass


class DomainError(DivergenceError):
    """A scalar map was applied outside its mathematical domain."""


# Shapes (exit 4)
class ShapeMismatchError(LoTeNetError):
    exit_code = 4


class AxisError(ShapeMismatchError):
    pass


class NormalizationError(LoTeNetError):
    """Input intensities are outside [0, 1]."""

    exit_code = 4


# Engine misuse (exit 2)
class UnsupportedOpError(LoTeNetError):
    pass


class TapeError(LoTeNetError):
    pass


# Settings or data the run cannot work with (exit 2)
class ReconstructionCapError(ConfigError):
    pass


class AugmentationError(ConfigError):
    pass


class MetricError(ConfigError):
    """A metric is undefined for the given labels (e.g. only one class)."""
