class QteError(Exception):
    exit_code = 1


class UsageError(QteError, ValueError):
    """Bad argument to a library call (wrong length, index out of range, ...)."""

    exit_code = 2


class ConfigError(QteError, ValueError):
    exit_code = 2


class IngestionError(QteError):
    exit_code = 3


class NumericalError(QteError, ArithmeticError):
    exit_code = 4
