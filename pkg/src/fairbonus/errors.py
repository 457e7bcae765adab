"""Error and warning types shared across the package.

The CLI maps these onto stable exit codes: ConfigError -> 2, DataError -> 3,
InfeasibleError -> 4.
"""


class FairbonusError(Exception):
    """Base class for all package errors."""


class ConfigError(FairbonusError):
    """A parameter, column role, or option is invalid or inconsistent."""


class DataError(FairbonusError):
    """The data itself is unusable: malformed cells, empty tables, degenerate groups."""


class InfeasibleError(FairbonusError):
    """A requested target or constraint set cannot be satisfied."""


class DataWarning(UserWarning):
    """Soft notice about data quirks (rejected rows, empty groups, fallbacks)."""
