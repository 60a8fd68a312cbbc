"""Exception classes raised by pfbmux."""


class PfbmuxError(Exception):
    """Base class for all pfbmux errors."""


class ConfigError(PfbmuxError):
    """Invalid parameters or a malformed experiment configuration."""


class PlanError(ConfigError):
    """A set of streams cannot be placed on the wideband grid."""


class DimensionError(PfbmuxError):
    """Array shapes or lengths do not agree."""


class MetricError(PfbmuxError):
    """A quality metric is undefined for the given inputs."""


class TimingError(PfbmuxError):
    """Symbol timing could not be recovered."""


class TrainingError(PfbmuxError):
    """Training diverged.

    Attributes:
        epoch (int): Epoch index at which the loss stopped being finite.
    """

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class SampleIOError(PfbmuxError):
    """A sample, filter or configuration file could not be read or written."""
