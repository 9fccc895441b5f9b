"""Exception hierarchy. The CLI maps each class to a process exit code."""


class QetsError(Exception):
    exit_code = 1


class ValidationError(QetsError, ValueError):
    exit_code = 2


class DataQualityError(QetsError):
    exit_code = 3


class CapacityError(QetsError):
    exit_code = 4


class DegenerateOutputError(DataQualityError):
    """Raised when a filter removes every bitstring."""


class DataQualityWarning(UserWarning):
    pass
