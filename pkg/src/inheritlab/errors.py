"""
Exception types raised across inheritlab.

Every error derives from InheritLabError and from the builtin it refines,
so callers can catch either ``InheritLabError`` or ``ValueError``.
"""


class InheritLabError(Exception):
    """Root of all inheritlab errors."""


class SingularMetricError(InheritLabError, ValueError):
    """Metric is not invertible (or not positive definite) at a point."""


class ChartDomainError(InheritLabError, ValueError):
    """Point lies outside the chart domain of a metric or field."""


class GeodesicSolverError(InheritLabError, RuntimeError):
    """Geodesic shooting failed to converge."""


class BoundaryPointError(InheritLabError, ValueError):
    """A level-set quantity was requested on the reference sphere itself."""


class FrequencyUndefinedError(InheritLabError, ValueError):
    """X(r) vanishes, so the frequency function is undefined there."""


class AnsatzInconsistencyError(InheritLabError, ValueError):
    """Extracted reduction data depends on the time slice."""

    def __init__(self, message: str, location=None, mismatch: float = float("nan")):
        super().__init__(message)
        self.location = location
        self.mismatch = mismatch


class NonPositiveLapseError(InheritLabError, ValueError):
    """Lapse V is not strictly positive at an evaluation point."""


class ResolutionError(InheritLabError, ValueError):
    """Grid too coarse for the requested operator."""
