"""Exception hierarchy shared across the package.

CLI exit codes: ConfigError -> 2, DataError -> 3, VersionError -> 4.
"""


class WeakboundError(Exception):
    """Base class for all package errors."""


class ConfigError(WeakboundError):
    """Invalid or inconsistent configuration."""


class DataError(WeakboundError):
    """Problem with input data files."""


class FormatError(DataError):
    """Malformed file contents (bad header, truncated payload, ...)."""


class ValidationError(DataError):
    """Well-formed file whose values violate an invariant."""


class ParameterError(WeakboundError):
    """Invalid argument to a library operation."""


class VersionError(WeakboundError):
    """Model/file version mismatch."""
