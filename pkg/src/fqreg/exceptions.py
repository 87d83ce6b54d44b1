"""Exception hierarchy. The CLI maps each class to a process exit code."""


class FQRError(Exception):
    exit_code = 1


class ConfigError(FQRError, ValueError):
    exit_code = 2


class DataError(FQRError, ValueError):
    exit_code = 3


class NumericalError(FQRError, ArithmeticError):
    exit_code = 4
