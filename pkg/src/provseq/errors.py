"""Exception hierarchy shared by all pipeline stages.

The three bases map onto the CLI exit codes: ``UsageError`` -> 1,
``DataError`` -> 2, ``NumericError`` -> 3.
"""


class ProvseqError(Exception):
    """Base class for every error raised by this package."""


class UsageError(ProvseqError):
    """Bad invocation, flag, or configuration value."""


class DataError(ProvseqError):
    """Input data is malformed, missing, or unusable."""


class NumericError(ProvseqError):
    """A numeric computation failed (divergence, NaN, ...)."""


# --- ingestion -------------------------------------------------------------

class MalformedLine(DataError):
    """A record line could not be parsed."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class StrictModeViolation(DataError):
    """A malformed line was encountered while strict parsing was enabled."""

    def __init__(self, cause: MalformedLine):
        self.cause = cause
        super().__init__(str(cause))


class UnsupportedFormat(DataError):
    """The requested input format is not one of the supported readers."""


# --- sketching -------------------------------------------------------------

class EmptyHistogram(DataError):
    """Sketching requested on a histogram with no entries."""


class EmptyGraph(DataError):
    """A graph with zero edges cannot produce a feature sequence."""


# --- autoencoder -----------------------------------------------------------

class DimensionMismatch(ProvseqError):
    """Operand shapes violate an operation's contract."""


class NonDivisibleHeads(ProvseqError):
    """The head count does not divide the model width."""


class DivergenceDetected(NumericError):
    """Training loss became NaN or infinite."""


class EmptySequence(DataError):
    """Feature extraction requested on an empty sequence."""


# --- detector --------------------------------------------------------------

class InsufficientDistinctPoints(DataError):
    """Fewer distinct vectors than requested clusters."""


class InsufficientSamples(DataError):
    """Too few samples to grow an isolation forest."""


class ThetaOutOfRange(ProvseqError):
    """The score-blending weight lies outside the configured range."""


class EmptyCalibrationSet(DataError):
    """Threshold calibration requested with no calibration scores."""


class DegenerateBatch(DataError):
    """Batch-maximum normalisation is undefined (max total score <= 0)."""


# --- evaluation ------------------------------------------------------------

class NoPositiveSamples(DataError):
    """A PR curve needs at least one attack-labelled sample."""


class DegenerateCurve(DataError):
    """Area computation needs at least two curve points."""


class EmptyBenignPool(DataError):
    """Dataset splitting needs at least one benign graph."""


class StageFailure(ProvseqError):
    """A pipeline stage failed; wraps the original error with context."""

    def __init__(self, stage: str, artifact: str, cause: Exception):
        self.stage = stage
        self.artifact = artifact
        self.cause = cause
        super().__init__(f"stage '{stage}' failed (artifact: {artifact}): {cause}")
