"""Exception hierarchy.

Errors are grouped by the CLI exit code they map to: configuration and usage
problems, bad input data, and numerical failures.
"""


class ModmonError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 2


class ConfigError(ModmonError, ValueError):
    exit_code = 1


class DataError(ModmonError, ValueError):
    exit_code = 2


class NumericError(ModmonError, ArithmeticError):
    exit_code = 3


class InvalidSnapshot(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class VersionMismatch(DataError):
    pass


class EmptyGraph(NumericError):
    pass


class InvalidScale(ConfigError):
    pass


class InvalidMean(ConfigError):
    pass


class InvalidBounds(ConfigError):
    pass


class InvalidStep(ConfigError):
    pass


class UnsupportedPrimitive(NumericError, TypeError):
    pass


class InsufficientData(NumericError):
    pass


class DegenerateChart(NumericError):
    """Phase I scores have zero spread, so control limits are meaningless."""


class ReplicationError(ModmonError):
    def __init__(self, replication_id, cause):
        self.replication_id = replication_id
        self.exit_code = getattr(cause, "exit_code", 3)
        super().__init__(f"replication {replication_id} failed: {cause}")
