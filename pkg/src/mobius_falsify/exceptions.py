"""Exception hierarchy shared by every stage of the analysis."""


class MobiusFalsifyError(Exception):
    """Base class for all package errors."""

    stage = None


class DataError(MobiusFalsifyError, ValueError):
    """Input data violates a structural invariant."""


class ParseError(DataError):
    """A dataset or report file could not be parsed."""


class SchemaVersionError(DataError):
    """The file declares a schema this version does not understand."""


class ShotTotalError(DataError):
    """Per-circuit counts do not add up to the declared shot number."""


class WidthMismatchError(DataError):
    """Records or outcomes disagree on the number of measured bits."""


class DegenerateDataError(DataError):
    """Too little data for the requested statistic (e.g. an empty label)."""


class ConvergenceError(MobiusFalsifyError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ReplicateError(MobiusFalsifyError, RuntimeError):
    """A resampling statistic raised on one replicate."""

    def __init__(self, message, index):
        super().__init__(message)
        self.index = index


class ShapeMismatchError(MobiusFalsifyError, ValueError):
    """Two reports do not have the same set of fields."""


class StageError(MobiusFalsifyError, RuntimeError):
    """Wraps a foreign exception raised inside a named pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
