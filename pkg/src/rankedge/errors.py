"""Error types shared by the library and the command line.

Each class carries the process exit code the CLI reports for it.
"""


class RankEdgeError(Exception):
    exit_code = 1


class UsageError(RankEdgeError):
    exit_code = 2


class InputError(RankEdgeError):
    """Malformed or out-of-domain input (shape, finiteness, parameters)."""

    exit_code = 3


class DegenerateError(RankEdgeError):
    """A quantity that must be positive (usually sigma_A) vanished."""

    exit_code = 4


class SizeError(RankEdgeError):
    """Problem size beyond an enumeration or memory cap."""

    exit_code = 5
