"""Exception types shared across the toolkit."""


class InvalidBoxError(ValueError):
    """A box violates the geometry or score invariants."""


class ShapeError(ValueError):
    """Tensor extents are incompatible with the requested operation."""


class DetectionFormatError(ValueError):
    """A detection/ground-truth text file failed to parse.

    Carries the 1-based line number of the offending line when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class WeightsFormatError(ValueError):
    """A weights container failed to decode."""


class TruncatedWeightsError(WeightsFormatError):
    """The container ended mid-entry."""


class DuplicateWeightNameError(WeightsFormatError):
    """Two entries share a name."""


class ExtentOverflowError(WeightsFormatError):
    """Declared extents are zero or their product is implausibly large."""


class ConfigError(ValueError):
    """A config file contains an unknown or malformed key."""


class EvaluationError(ValueError):
    """Prediction and ground-truth inputs cannot be evaluated together."""
