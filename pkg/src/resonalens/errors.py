"""Exception types shared across the package."""

__all__ = ["ResonalensError", "ValidationError", "NumericalError", "ConstructionError"]


class ResonalensError(Exception):
    """Base class for all package errors."""


class ValidationError(ResonalensError):
    """A parameter, profile, mesh, or config failed validation."""


class NumericalError(ResonalensError):
    """A solver or assembly step did not produce usable numbers."""


class ConstructionError(ResonalensError):
    """An adaptive construction exhausted its refinement budget."""
