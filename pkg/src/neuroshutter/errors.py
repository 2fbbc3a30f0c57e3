"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class NscError(Exception):
    exit_code = 1


class ConfigError(NscError, ValueError):
    exit_code = 2


class TimeRangeError(ConfigError):
    """Sampling time outside ``[0, duration]``."""


class ShapeError(NscError, ValueError):
    exit_code = 2


class EmptyInputError(NscError, ValueError):
    exit_code = 2


class CalibrationError(NscError, ValueError):
    exit_code = 4


class FormatError(NscError, IOError):
    exit_code = 3


class ParseError(FormatError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(NscError, ValueError):
    exit_code = 4


class InvariantViolation(NscError, RuntimeError):
    exit_code = 4
