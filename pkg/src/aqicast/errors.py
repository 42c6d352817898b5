"""Exception hierarchy. Each family carries the CLI exit code it maps to."""


class AqicastError(Exception):
    exit_code = 1


class ConfigError(AqicastError):
    """Bad parameters, unknown tokens, invalid configuration files."""

    exit_code = 2


class DataError(AqicastError):
    """Input data cannot support the requested operation."""

    exit_code = 3


class SchemaError(DataError):
    pass


class EmptyInputError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class DomainError(DataError):
    pass


class SplitError(DataError):
    pass


class PipelineOrderError(DataError):
    pass


class ConvergenceError(AqicastError):
    exit_code = 4

    def __init__(self, message, violation=None):
        super().__init__(message)
        self.violation = violation
