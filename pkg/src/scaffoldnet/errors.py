"""Exception hierarchy shared by every scaffoldnet module."""


class ScaffoldError(Exception):
    """Base class for all errors raised by scaffoldnet."""


class ShapeError(ScaffoldError, ValueError):
    """Tensor shapes are invalid or incompatible."""


class ConfigError(ScaffoldError, ValueError):
    """A configuration value is out of its legal range."""


class InputError(ScaffoldError, ValueError):
    """Caller-supplied data violates an operation's precondition."""


class DegenerateInputError(InputError):
    """ROC input contains only one class, so the curve is undefined."""


class IngestionError(ScaffoldError, OSError):
    """An image file could not be read or decoded."""

    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = str(path)
        self.reason = reason


class CorruptCheckpointError(ScaffoldError):
    """A checkpoint file is malformed."""


class BadMagicError(CorruptCheckpointError):
    pass


class UnsupportedVersionError(CorruptCheckpointError):
    pass


class TruncatedCheckpointError(CorruptCheckpointError):
    pass
