"""Exception types shared across the package.

Grouped here so callers can distinguish configuration mistakes (bad input,
reject early) from scientific failures (the computation itself broke down).
"""

from __future__ import annotations


class SwellError(Exception):
    """Base class for all package-specific errors."""


class GridError(SwellError, ValueError):
    """Invalid grid construction parameters."""


class FieldError(SwellError, ValueError):
    """Field invariant violated (length mismatch, non-finite samples)."""


class ConfigError(SwellError, ValueError):
    """Invalid or unknown run-configuration content."""


class ChordArcError(SwellError, RuntimeError):
    """Interface lost the chord-arc property (self-approach); breakdown."""


class TaylorSignError(SwellError, RuntimeError):
    """The strong Taylor sign condition A > 0 failed; breakdown."""


class SolverError(SwellError, RuntimeError):
    """Projection solve failed to converge; carries the final residual."""

    def __init__(self, message: str, residual: float | None = None,
                 iterations: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class QuadratureError(SwellError, RuntimeError):
    """Principal-value quadrature failed to converge to tolerance."""


class IOFormatError(SwellError, RuntimeError):
    """Malformed artifact file (checkpoint, field dump, series)."""
