"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericalError -> 3.
"""


class GnnadError(Exception):
    """Base class for all package errors."""


class ConfigError(GnnadError):
    """Invalid configuration or usage (bad flag values, impossible settings)."""


class DataError(GnnadError):
    """Malformed input data (parse errors carry file and line context)."""


class NumericalError(GnnadError):
    """Non-finite values where finite ones are required (loss blew up, bad gradient)."""
