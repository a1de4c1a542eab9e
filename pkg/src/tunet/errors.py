"""Exception hierarchy shared across the package."""


class TunetError(Exception):
    """Base class for all package errors."""


class ShapeError(TunetError, ValueError):
    pass


class ConfigError(TunetError, ValueError):
    pass


class DataError(TunetError, ValueError):
    pass


class ChecksumError(TunetError):
    pass


class VersionError(TunetError):
    pass


class DivergenceError(TunetError, FloatingPointError):
    pass
