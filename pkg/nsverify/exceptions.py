"""Error types raised across the package.

Each class also derives from the builtin a caller would naturally catch
(``ValueError`` for bad input, ``RuntimeError`` for failures during a run).
"""


class NSVerifyError(Exception):
    """Base class for every error raised by nsverify."""


class GridError(NSVerifyError, ValueError):
    pass


class FieldError(NSVerifyError, ValueError):
    pass


class ForcingError(NSVerifyError, ValueError):
    pass


class CoverageError(NSVerifyError, ValueError):
    """A requested time interval is not covered by the available data."""


class NotApplicableError(NSVerifyError, ValueError):
    """An identity or check does not apply to the given data (e.g. 2D-only)."""


class BudgetError(NSVerifyError, ValueError):
    pass


class ConfigError(NSVerifyError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ArtifactError(NSVerifyError, FileNotFoundError):
    pass


class BlowUpError(NSVerifyError, RuntimeError):
    """A run produced a non-finite or runaway state.

    ``report`` is a JSON-serialisable dict describing where the run stopped;
    ``trajectory`` holds everything recorded up to that point.
    """

    def __init__(self, message, report=None, trajectory=None):
        super().__init__(message)
        self.report = report or {}
        self.trajectory = trajectory
