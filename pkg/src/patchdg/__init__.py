"""Symmetric interior-penalty dG isogeometric solver on multi-patch NURBS surfaces."""

__version__ = "0.1.0"

from .errors import (
    DefinitenessError,
    DomainError,
    GeometryError,
    PatchDGError,
    SolverError,
    TopologyError,
)
from .splines import KnotVector, TensorBasis, open_knot_vector
from .geometry import MultiPatchDomain, SurfacePatch, quarter_cylinder_domain, torus_domain
from .assembly import DGSpace, ModelProblem, PenaltyConfig, build_system
from .solver import dense_cholesky, pcg
from .norms import dg_norm, dg_star_norm, l2_norm_error
from .benchmarks import BENCHMARKS, get_benchmark, make_problem, run_convergence_study

__all__ = [
    "BENCHMARKS", "DGSpace", "DefinitenessError", "DomainError", "GeometryError", "KnotVector",
    "ModelProblem", "MultiPatchDomain", "PatchDGError", "PenaltyConfig", "SolverError",
    "SurfacePatch", "TensorBasis", "TopologyError", "build_system", "dense_cholesky", "dg_norm",
    "dg_star_norm", "get_benchmark", "l2_norm_error", "make_problem", "open_knot_vector", "pcg",
    "quarter_cylinder_domain", "run_convergence_study", "torus_domain",
]
