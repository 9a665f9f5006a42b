# =====================================================
# ERRORS
# =====================================================
#
# Every failure the tracker reports is one of these classes.
# The CLI maps each family to an exit code:
#
#   ConfigError         -> 1
#   DataError (+ kids)  -> 2
#   SolverDivergedError -> 3
#   SelfTestFailure     -> 4
#
# =====================================================


class TrackerError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(TrackerError, ValueError):
    """A run-config key is unknown or its value is out of range."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class DataError(TrackerError):
    """Input data (frames, annotations, feature files) is unusable."""


class GridMismatchError(DataError, ValueError):
    """Two arrays that must share a grid do not."""


class ExternalChannelsError(DataError):
    """An external feature-channel file is invalid."""


class ChannelFileParseError(ExternalChannelsError):
    """The channel file is truncated or has a bad header."""


class NonFiniteFeaturesError(ExternalChannelsError):
    """The channel file contains NaN or infinite values."""


class MissingAnnotationError(DataError):
    """A sequence directory has no ground-truth file."""


class AnnotationParseError(DataError):
    """A ground-truth line could not be parsed."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class EmptySequenceError(DataError):
    """A sequence directory has no image frames."""


class SyntheticSpecError(DataError, ValueError):
    """A synthetic-sequence description cannot be rendered."""


class SolverDivergedError(TrackerError):
    """ADMM produced non-finite values."""

    def __init__(self, iteration: int):
        super().__init__(f"ADMM diverged at iteration {iteration}")
        self.iteration = iteration


class LostTargetError(TrackerError):
    """The search window no longer overlaps the frame."""


class SelfTestFailure(TrackerError):
    """At least one oracle suite failed."""
