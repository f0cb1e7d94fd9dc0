"""Exception hierarchy shared across the package.

Data problems (exit code 2 in the CLI) and numerical failures (exit code 3)
are kept on separate branches so callers can map them without string matching.
"""


class DelayDynError(Exception):
    """Base class for all package errors."""


class InvalidInputError(DelayDynError, ValueError):
    """An argument violates an operation's precondition."""


class DegenerateDurationError(InvalidInputError):
    """Planned or actual duration is zero or negative."""


class SchemaMismatchError(InvalidInputError):
    """Covariates do not match the trained covariate schema."""


class InsufficientDataError(InvalidInputError):
    """Too few observations (chains, curve points, nonzero pairs, ...)."""


class DataError(DelayDynError):
    """Problems with dataset content or files."""


class ParseError(DataError):
    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class ReferentialIntegrityError(DataError):
    """A row references an epic_id that does not exist."""


class EmptyDatasetError(DataError):
    """Cleaning removed every epic."""


class DataGapError(DataError):
    """A required (epic, milestone) snapshot is missing."""


class NumericError(DelayDynError):
    """Numerical failure."""


class NumericDomainError(NumericError):
    """A computation produced a hard non-finite result."""


class SamplerFailureError(NumericError):
    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics
