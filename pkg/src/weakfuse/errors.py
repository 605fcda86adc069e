"""Exception types raised across the package."""


class WeakFuseError(Exception):
    """Base class for all package errors."""


class ShapeError(WeakFuseError, ValueError):
    pass


class StateError(WeakFuseError, RuntimeError):
    pass


class NumericError(WeakFuseError, FloatingPointError):
    pass


class DomainError(WeakFuseError, ValueError):
    pass


class ConfigError(WeakFuseError, ValueError):
    pass


class ParseError(WeakFuseError, ValueError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class FormatError(WeakFuseError, ValueError):
    pass
