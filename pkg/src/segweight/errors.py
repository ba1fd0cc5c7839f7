"""Exception hierarchy shared by all segweight modules."""


class SegweightError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(SegweightError, ValueError):
    """Inputs violate a documented precondition (shape, range, count)."""


class FormatError(SegweightError, OSError):
    """A file exists but its contents are not in the expected format."""


class UndefinedMetricError(ValidationError):
    """A metric's denominator is empty for the requested class."""


class GenerationError(SegweightError):
    """The scene generator could not satisfy its constraints."""


class TrainingError(SegweightError):
    """Training diverged or was misconfigured."""
