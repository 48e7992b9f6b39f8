"""Exception hierarchy shared by every osnn subpackage."""


class OsnnError(Exception):
    """Base class for all errors raised by osnn."""


class ShapeError(OsnnError, ValueError):
    """Operand shapes or lengths are incompatible."""


class NonFiniteError(OsnnError, ValueError):
    """A tensor contains NaN or Inf where finite values are required."""


class GraphError(OsnnError):
    """The gradient graph is malformed (non-scalar output, cycle, ...)."""


class DeviceError(OsnnError, ValueError):
    """A device parameter lies outside its physical range."""


class ConfigError(OsnnError, ValueError):
    """An invalid configuration value; ``path`` names the offending field."""

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class CalibrationError(OsnnError):
    """Calibration failed or a calibrated mapping was required but missing."""


class DivergenceError(OsnnError):
    """An iterative fit diverged; ``trace`` holds the loss history."""

    def __init__(self, message, trace=None):
        self.trace = list(trace or [])
        super().__init__(message)


class TrainingError(OsnnError):
    """Training produced a non-finite loss; ``checkpoint`` is the last good state."""

    def __init__(self, message, checkpoint=None):
        self.checkpoint = checkpoint
        super().__init__(message)


class FormatError(OsnnError, ValueError):
    """A file does not follow its expected binary/text format."""

    def __init__(self, message, offset=None):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})" if offset is not None else message)
