"""Exception types shared across the package."""


class PhdError(Exception):
    """Base class for all package-specific errors."""


class CohortParseError(PhdError):
    """Raised when a cohort file is malformed; carries line/offset context."""

    def __init__(self, message: str, *, line: int | None = None, offset: int | None = None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if offset is not None:
            loc.append(f"offset {offset}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.line = line
        self.offset = offset


class UnsupportedVersionError(PhdError):
    """Cohort file was written by an incompatible format version."""


class DegenerateSampleError(PhdError):
    """All horizons of a sample are masked; the caller should skip it."""


class UndefinedMetricError(PhdError):
    """Metric is undefined for the given inputs (e.g. single-class labels)."""


class DependencyError(PhdError):
    """A required prior pipeline artifact (e.g. teacher checkpoints) is missing."""


class NumericError(PhdError):
    """A non-finite value surfaced in a numeric computation."""
