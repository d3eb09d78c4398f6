"""Shared exception types with stable CLI exit-code semantics."""

from __future__ import annotations


class ValidationError(ValueError):
    """Bad input: out-of-range field, shape mismatch, non-finite value. CLI exit 2."""


class GuardError(RuntimeError):
    """A resource guard tripped (e.g. combinatorial search too large). CLI exit 3."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss. Carries the offending step record. CLI exit 4."""

    def __init__(self, message: str, record=None):
        super().__init__(message)
        self.record = record
