"""
Exception hierarchy shared by all packages. Scripts map these onto exit codes.
"""
from typing import Any, Optional, Tuple


class ConfideError(Exception):
    """Base class for every error raised by this repository."""


class ConfigError(ConfideError):
    """Invalid or conflicting configuration values."""


class ShapeError(ConfideError):
    """Operand shapes do not fit the requested operation."""


class AutodiffError(ConfideError):
    """Misuse of the reverse-mode engine, e.g. backward from a non-scalar."""


class FamilyError(ConfideError):
    """Unknown PDE family or a family mismatch between two objects."""


class PatchError(ConfideError):
    """Patch is too small for the finite-difference stencil."""


class ResidualError(ConfideError):
    """Functional residual evaluated to a non-finite value."""

    def __init__(self, message: str, index: Optional[Tuple[int, ...]] = None) -> None:
        super().__init__(message)
        self.index = index


class UnstableRolloutError(ConfideError):
    """
    Explicit rollout produced non-finite values or exceeded the blowup threshold.

    Attributes:
        step: first offending time step (index into the rollout slices)
        partial: rollout computed up to and including the offending step
    """

    def __init__(self, message: str, step: int, partial: Any = None) -> None:
        super().__init__(message)
        self.step = step
        self.partial = partial


class CholeskyError(ConfideError):
    """GP covariance could not be factorized even after jitter escalation."""


class GenerationError(ConfideError):
    """Dataset generation aborted, typically after exhausting retries."""


class DatasetError(ConfideError):
    """Dataset container is unreadable, corrupted or of an unsupported version."""


class TrainingError(ConfideError):
    """Training aborted."""
