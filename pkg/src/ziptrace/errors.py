"""Exception types shared across the package."""


class ZipTraceError(Exception):
    """Base class for all package-specific errors."""


class ParseError(ZipTraceError, ValueError):
    """A source file could not be parsed; carries the offending line number."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class TraceValidationError(ZipTraceError, ValueError):
    """Event data violates a trace invariant (ordering, overlap, bounds)."""


class ParameterError(ZipTraceError, ValueError):
    """A configuration or policy parameter is out of its legal range."""


class UnknownUserError(ZipTraceError, KeyError):
    """A user id is absent from the dataset it was looked up in."""


class UndefinedScoreError(ZipTraceError, ValueError):
    """A behavioural score is undefined for the given input (e.g. empty trace)."""
