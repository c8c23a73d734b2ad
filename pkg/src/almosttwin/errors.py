"""Exception hierarchy shared by the library and the CLI.

Each class carries the process exit code the CLI maps it to.
"""


class AlmostTwinError(Exception):
    exit_code = 1


class ConfigError(AlmostTwinError, ValueError):
    exit_code = 2


class SizeLimitError(AlmostTwinError, RuntimeError):
    """An exhaustive computation would exceed its enumeration or memory budget."""

    exit_code = 3


class PreconditionError(AlmostTwinError, ValueError):
    exit_code = 4


class OutOfRangeError(PreconditionError):
    """An argument lies outside the range covered by a factor table or weight array."""
