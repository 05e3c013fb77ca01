"""Exception hierarchy shared across the package.

Each class maps to a CLI exit code so batch scripts can distinguish
configuration mistakes from data problems and numerical blow-ups.
"""


class SkelByolError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(SkelByolError):
    """Invalid run configuration or incompatible command arguments."""

    exit_code = 2


class DataError(SkelByolError):
    """Malformed dataset container, shape mismatch, or non-finite data."""

    exit_code = 3


class NumericalError(SkelByolError):
    """Training diverged (NaN/Inf loss) or an operation left the finite domain."""

    exit_code = 4
