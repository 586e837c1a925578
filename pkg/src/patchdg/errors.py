"""Exception hierarchy used across the package."""


class PatchDGError(Exception):
    """Base class for all errors raised by patchdg."""


class DomainError(PatchDGError, ValueError):
    """A parameter value lies outside its admissible domain."""


class GeometryError(PatchDGError):
    """Degenerate or otherwise invalid surface parameterization."""


class TopologyError(PatchDGError):
    """Inconsistent multi-patch connectivity."""


class DefinitenessError(PatchDGError, ArithmeticError):
    """A matrix expected to be positive definite is not."""


class SolverError(PatchDGError, ArithmeticError):
    """Non-finite arithmetic inside an iterative solver."""
