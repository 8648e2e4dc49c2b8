"""Exception hierarchy shared by every module."""
from __future__ import annotations


class MultiSvmError(Exception):
    """Base class for all errors raised by this package."""

    def add_context(self, context: str) -> "MultiSvmError":
        # prefix the message in place so the original type and attributes survive
        if self.args:
            self.args = (f"[{context}] {self.args[0]}",) + tuple(self.args[1:])
        else:
            self.args = (f"[{context}]",)
        return self


class InputError(MultiSvmError, ValueError):
    """Invalid arguments or data (wrong shapes, unknown classes, bad parameters)."""


class FormatError(InputError):
    """A file on disk does not conform to the expected format."""


class DegenerateError(MultiSvmError, ValueError):
    """A statistic is undefined for the given (degenerate) input."""


class ConvergenceError(MultiSvmError, RuntimeError):
    """SMO did not reach the KKT tolerance within the iteration budget.

    ``diagnostics`` holds the last iterate: ``alpha``, ``bias``,
    ``iterations`` and the remaining ``kkt_gap``.
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
