"""Exception hierarchy shared by all vitalcuff modules."""


class VitalcuffError(Exception):
    """Base class for all errors raised by this package."""


# --- filter / DSP errors ---------------------------------------------------

class InvalidCorner(VitalcuffError):
    """Corner frequency outside (0, Nyquist) or corners reversed."""


class EvenTaps(VitalcuffError):
    """FIR designs require an odd tap count (symmetric, linear phase)."""


class StateShapeMismatch(VitalcuffError):
    """Filter state does not match the filter it is used with."""


class SignalTooShort(VitalcuffError):
    """Signal shorter than the operation's minimum length."""


class TooFewPoints(VitalcuffError):
    """Not enough points for the requested polynomial degree."""


class NonMonotoneX(VitalcuffError):
    """Abscissae must be strictly increasing."""


# --- pipeline errors -------------------------------------------------------

class NotInitialized(VitalcuffError):
    """Streaming pipeline used before start() / after shutdown."""


class InsufficientBeats(VitalcuffError):
    """Fewer beats than the metric needs."""


class TooFewGroupedPeaks(VitalcuffError):
    """Peak grouping left fewer than the minimum usable peaks."""


class ThresholdNotReached(VitalcuffError):
    """No peak satisfies the amplitude-ratio rule on one side of the MAP."""

    def __init__(self, side, message=None):
        self.side = side  # "sbp" or "dbp"
        super().__init__(message or f"no qualifying peak on the {side} side")


class SourceExhausted(VitalcuffError):
    """Trace provider could not supply another trace."""


# --- simulation errors -----------------------------------------------------

class ControlError(VitalcuffError):
    """Controller command issued from an incompatible phase."""


# --- synthesis errors ------------------------------------------------------

class InvalidSynthSpec(VitalcuffError):
    """Synthetic-signal specification violates its invariants."""


class InfeasibleEnvelope(VitalcuffError):
    """No envelope satisfies the requested amplitude-ratio crossings."""


# --- statistics errors -----------------------------------------------------

class EmptyInput(VitalcuffError):
    """Statistic requested on an empty (or too small) sample."""


class TooFewSamples(VitalcuffError):
    """Statistic needs a larger sample."""


# --- file format errors ----------------------------------------------------

class TraceFormatError(VitalcuffError):
    """Base class for trace/pairs file problems."""


class MalformedHeader(TraceFormatError):
    """Trace header block missing or invalid."""


class MalformedRow(TraceFormatError):
    """Data row failed to parse or validate."""


class NonUniformSampling(TraceFormatError):
    """Per-sample timestamps disagree with the declared sample rate."""


class UnitMismatch(TraceFormatError):
    """Units do not match the channel."""


class RateMismatch(TraceFormatError):
    """Sample rate disagrees with the channel's expected rate."""


class UnknownQuantity(TraceFormatError):
    """Paired-measurement quantity is not one of pulse/sbp/dbp."""


class ConfigError(VitalcuffError):
    """Configuration value outside its physical range."""
