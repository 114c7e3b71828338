"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes: configuration / usage problems
exit with 2, malformed or inconsistent input data with 3, and numerical
failures (degenerate fits, zero residual variance, ...) with 4.
"""


class LasrError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(LasrError):
    """A configuration value is out of range or inconsistent."""


class DataError(LasrError):
    """Input data violates a precondition (dimensions, tags, emptiness)."""


class FormatError(DataError):
    """A file does not conform to its declared grammar.

    ``line`` is the 1-based line number at which parsing failed, when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericError(LasrError):
    """A numerical procedure failed (rank deficiency, zero variance, ...)."""


class StageError(LasrError):
    """A pipeline stage failed; carries the stage name and the cause."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
