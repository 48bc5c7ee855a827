"""Exception hierarchy shared across the package."""

from __future__ import annotations


class MFPCError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(MFPCError, ValueError):
    """A value failed its construction-time invariants."""


class EmptyMatrix(ValidationError):
    pass


class NonFiniteEntry(ValidationError):
    pass


class LabelOutOfRange(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class EmptyMemberSet(MFPCError, ValueError):
    pass


class ZeroDirection(MFPCError, ValueError):
    pass


class ConvergenceFailure(MFPCError, RuntimeError):
    pass


class InnerSolverStall(MFPCError, RuntimeError):
    """The convex subproblem solver hit its iteration cap without a certificate."""


class ZeroColumn(MFPCError, RuntimeError):
    """A recursively solved projection column collapsed to zero."""

    def __init__(self, message: str, column: int):
        super().__init__(message)
        self.column = column


class EmptyClusterUnrecoverable(MFPCError, RuntimeError):
    pass


class ParseError(MFPCError, ValueError):
    pass


class MissingFile(MFPCError, FileNotFoundError):
    pass


class UnknownDataset(MFPCError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else ""
