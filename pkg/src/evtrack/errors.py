"""Exception types shared across the pipeline."""


class EvtrackError(Exception):
    """Base class for all library errors."""


class DataError(EvtrackError):
    """Invalid input data. Carries the 1-based source line when known."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class ParseError(DataError):
    """Malformed event text."""


class RangeError(DataError):
    """Field value outside the declared sensor geometry or domain."""


class OrderingError(DataError):
    """Timestamp regression in an event stream."""


class ParameterError(EvtrackError, ValueError):
    """Invalid configuration or operation parameter."""


class WeightError(EvtrackError):
    """Weight container problem; names the offending tensor when known."""


class StateError(EvtrackError):
    """Operation invoked in an invalid order (e.g. backward before forward)."""


class TrainingAbort(EvtrackError):
    """Training stopped on a non-finite loss."""
