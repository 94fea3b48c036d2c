"""Exception hierarchy shared across the toolkit.

The CLI maps these onto stable exit codes: configuration problems exit
with 2, data and file-format problems with 3, numerical failures with 4.
"""


class PathgenError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(PathgenError):
    """Invalid configuration, incompatible shapes, bad hyperparameters."""

    exit_code = 2


class DataFormatError(PathgenError):
    """Corrupt or malformed input data or persisted files."""

    exit_code = 3


class NumericalError(PathgenError):
    """Non-finite losses or other numerical breakdown during a run."""

    exit_code = 4
