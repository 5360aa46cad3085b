"""Exception taxonomy shared by every earthdial module.

Validation-type errors map to CLI exit code 1, transport/io errors to 2
(see :func:`exit_code_for`).
"""

from __future__ import annotations


class EarthdialError(Exception):
    """Base class for all errors raised by this package."""


# --- raster ---------------------------------------------------------------

class AllPixelsInvalid(EarthdialError):
    """Every pixel is masked out; a statistic over valid pixels is undefined."""


class IndexOutOfRange(EarthdialError):
    """A band index exceeds the raster's band count."""


# --- tiler ----------------------------------------------------------------

class InvalidRange(EarthdialError):
    """min_tiles/max_tiles do not form a valid 1 <= min <= max range."""


class DimensionMismatch(EarthdialError):
    """A tile plan is applied to a raster with different dimensions."""


# --- fusion ---------------------------------------------------------------

class InvalidTarget(EarthdialError):
    """Requested reduction target is outside [1, input size]."""


class NonDivisible(EarthdialError):
    """Block-average reduction needs the output size to divide the input."""


class ShapeMismatch(EarthdialError):
    """Token grids that must share a shape do not."""


class TooManyTimesteps(EarthdialError):
    """A temporal stack exceeds the configured timestep limit."""


# --- instruct -------------------------------------------------------------

class UnknownSubject(EarthdialError):
    """Prompt subject is not among the sample's label categories."""


class FormatError(EarthdialError):
    """Generated text does not follow the Question:/Answer: format."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class FormatExhausted(EarthdialError):
    """Every generation attempt failed format validation."""

    def __init__(self, attempts: int):
        super().__init__(f"no valid output after {attempts} attempts")
        self.attempts = attempts


class MissingField(EarthdialError):
    """A task template requires an input field that was not provided."""


class InvalidClassLabel(EarthdialError):
    """A class answer is outside the task's closed vocabulary."""


class ParseError(EarthdialError):
    """A serialized file is malformed; carries the 1-based line number."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


# --- genclient ------------------------------------------------------------

class TransportError(EarthdialError):
    """Connection/timeout failure, or retryable HTTP failures exhausted."""


class HttpError(EarthdialError):
    """Non-retryable HTTP status from the generator endpoint."""

    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"HTTP {status}" + (f": {detail}" if detail else ""))
        self.status = status


class MalformedResponse(EarthdialError):
    """Generator endpoint returned JSON without the expected fields."""


class ScriptExhausted(EarthdialError):
    """A scripted mock client was called past the end of its script."""


# --- geometry / metrics ---------------------------------------------------

class InvalidThresholds(EarthdialError):
    """Size-class thresholds must be strictly increasing."""


class InvalidCount(EarthdialError):
    """Object count must be a positive integer."""


class MismatchedIds(EarthdialError):
    """Prediction and ground-truth files do not cover the same image ids."""


class UnknownLabel(EarthdialError):
    """A label falls outside the declared class set."""


class UnknownBackend(EarthdialError):
    """Requested kernel backend is not available in this process."""


_TRANSPORT_ERRORS = (TransportError, HttpError, MalformedResponse)


def exit_code_for(err: BaseException) -> int:
    """CLI exit code for an error: 2 for io/transport, 1 for validation."""
    if isinstance(err, _TRANSPORT_ERRORS) or isinstance(err, OSError):
        return 2
    return 1
