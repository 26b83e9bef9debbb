"""Exception types raised across the package."""


class MonomsError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(MonomsError, ValueError):
    pass


class DegenerateGridError(MonomsError):
    pass


class SpeFormatError(MonomsError):
    """Token count of a permeability file does not match the requested shape."""

    def __init__(self, expected, found, path=None):
        self.expected = expected
        self.found = found
        where = f" in {path}" if path is not None else ""
        super().__init__(f"expected {expected} values{where}, found {found}")


class DataError(MonomsError):
    pass


class AssemblyError(MonomsError):
    pass


class SingularMatrixError(MonomsError):
    def __init__(self, message, pivot=None):
        self.pivot = pivot
        super().__init__(message)


class FactorizationError(MonomsError):
    def __init__(self, row):
        self.row = row
        super().__init__(f"zero pivot in incomplete factorization at row {row}")


class InvalidOperatorError(MonomsError):
    pass


class DivergenceError(MonomsError):
    """Iteration broke down; ``history`` holds whatever was recorded before."""

    def __init__(self, message, history=None):
        self.history = list(history) if history is not None else []
        super().__init__(message)


class ConfigError(MonomsError):
    """Invalid case file; ``key`` names the offending entry when there is one."""

    def __init__(self, message, key=None):
        self.key = key
        super().__init__(message)
