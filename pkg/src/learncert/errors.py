"""Exception types shared across the toolkit."""

from __future__ import annotations


class LearnCertError(Exception):
    """Base class for toolkit errors."""


class DimensionError(LearnCertError, ValueError):
    def __init__(self, what: str, expected, actual):
        self.what = what
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected {expected}, got {actual}")


class CorruptFileError(LearnCertError):
    pass


class HashMismatchError(LearnCertError):
    pass


class NumericalError(LearnCertError, FloatingPointError):
    """Non-finite values where finite ones are required."""


class DivergenceError(NumericalError):
    def __init__(self, step: int, message: str = "loss became non-finite"):
        self.step = step
        super().__init__(f"{message} at step {step}")


class NonConvergenceError(LearnCertError):
    def __init__(self, message: str, history=None):
        self.history = history
        super().__init__(message)


class AbstainedError(LearnCertError):
    """An operation needs a bound but the certificate abstained."""
