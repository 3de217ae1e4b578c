"""
Exception hierarchy shared by the library and the command-line driver.

Every class derives from a built-in type as well (``ValueError``, ``ArithmeticError``)
so callers that only know the built-ins keep working. ``exit_code`` is what the CLI
returns when the exception escapes a subcommand.
"""

from typing import Optional, Tuple

__all__ = [
    "AssemblyNetError",
    "UsageError",
    "ConfigError",
    "DataError",
    "ShapeError",
    "AvolFormatError",
    "BadMagicError",
    "TruncatedPayloadError",
    "PayloadSizeMismatchError",
    "NumericalError",
    "MemberTrainingError",
]


class AssemblyNetError(Exception):
    """Base class. Unclassified failures are reported as data errors."""

    exit_code: int = 2
    kind: str = "data"


class UsageError(AssemblyNetError, ValueError):
    """Bad command-line usage or invalid argument combination."""

    exit_code = 1
    kind = "usage"


class ConfigError(UsageError):
    """Malformed experiment config (unknown keys, wrong types, bad schema version)."""

    kind = "config"


class DataError(AssemblyNetError, ValueError):
    """Input data violates a precondition (grids, labels, missing files)."""

    exit_code = 2
    kind = "data"


class ShapeError(DataError):
    """Tensor or grid shapes do not line up."""

    kind = "shape"


class AvolFormatError(DataError):
    """An AVOL or AWTS file could not be decoded."""

    kind = "format"


class BadMagicError(AvolFormatError):
    kind = "bad-magic"


class TruncatedPayloadError(AvolFormatError):
    kind = "truncated"


class PayloadSizeMismatchError(AvolFormatError):
    kind = "size-mismatch"


class NumericalError(AssemblyNetError, ArithmeticError):
    """Non-finite loss, gradient or statistic."""

    exit_code = 3
    kind = "numerical"


class MemberTrainingError(AssemblyNetError):
    """
    Training of one assembly member failed.
    Carries the tile index and takes its exit code from the wrapped cause.
    """

    kind = "member"

    def __init__(self, tile_index: Tuple[int, int, int], cause: BaseException, scale: Optional[str] = None) -> None:
        where = f"{scale} " if scale else ""
        super().__init__(f"{where}member {tile_index} failed: {cause}")
        self.tile_index = tile_index
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", AssemblyNetError.exit_code)
