"""Manufactured-solution benchmarks and convergence studies.

Three benchmarks are available:

``quarter_cylinder``
    Unit-radius quarter cylinder of height ``L = 4`` in four stacked
    patches, homogeneous Dirichlet data, ``u = rho g1(phi) sin(sigma pi z / L)``
    with ``phi = atan2(x, y)``.
``torus``
    Torus ``R = 2, r = 1`` in four patches, ``u = sin(3 phi) cos(3 theta + phi)``
    with ``phi = atan2(y, x)`` and ``theta = atan2(z, sqrt(x^2+y^2) - R)``.
``single_patch_poisson``
    Flat unit square, ``u = sin(pi x) sin(pi y)``.

Each benchmark provides ``-Delta u`` in closed form; the source of a run is
``alpha_i (-Delta u) + u`` (the last term only with reaction).
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import DGSpace, ExactSolution, ModelProblem, PenaltyConfig, build_system
from .errors import DomainError
from .geometry import MultiPatchDomain, quarter_cylinder_domain, torus_domain, unit_square_domain
from .norms import dg_norm, l2_norm_error
from .solver import SolveReport, direct_solve, pcg

log = logging.getLogger(__name__)


# --- quarter cylinder ----------------------------------------------------------

CYL_LENGTH = 4.0
CYL_SIGMA = 3
CYL_RHO = 1.0 / (1.5 - math.sqrt(2.0))


def cyl_g1(phi):
    return (1.0 - np.cos(phi)) * (1.0 - np.sin(phi))


def cyl_g2(phi):
    return np.cos(phi) + np.sin(phi) - 4.0 * np.sin(phi) * np.cos(phi)


def _cyl_angle(X):
    return np.arctan2(X[..., 0], X[..., 1])


def cylinder_u(X, L=CYL_LENGTH, sigma=CYL_SIGMA, rho=CYL_RHO):
    return rho * cyl_g1(_cyl_angle(X)) * np.sin(sigma * np.pi * X[..., 2] / L)


def cylinder_grad(X, L=CYL_LENGTH, sigma=CYL_SIGMA, rho=CYL_RHO):
    x, y, z = X[..., 0], X[..., 1], X[..., 2]
    phi = _cyl_angle(X)
    s, c = np.sin(phi), np.cos(phi)
    dg1 = s - c + c * c - s * s
    k = sigma * np.pi / L
    gz, dgz = np.sin(k * z), k * np.cos(k * z)
    rr = x * x + y * y
    dphi = np.stack([y / rr, -x / rr, np.zeros_like(x)], axis=-1)
    out = (rho * dg1 * gz)[..., None] * dphi
    out[..., 2] += rho * cyl_g1(phi) * dgz
    return out


def cylinder_minus_laplacian(X, L=CYL_LENGTH, sigma=CYL_SIGMA, rho=CYL_RHO):
    phi = _cyl_angle(X)
    gz = np.sin(sigma * np.pi * X[..., 2] / L)
    return rho * (sigma**2 * np.pi**2 / L**2 * cyl_g1(phi) - cyl_g2(phi)) * gz


# --- torus ---------------------------------------------------------------------

TORUS_R = 2.0
TORUS_r = 1.0


def torus_angles(X, R=TORUS_R):
    rho = np.hypot(X[..., 0], X[..., 1])
    return np.arctan2(X[..., 1], X[..., 0]), np.arctan2(X[..., 2], rho - R)


def torus_u(X, R=TORUS_R):
    phi, theta = torus_angles(X, R)
    return np.sin(3 * phi) * np.cos(3 * theta + phi)


def torus_grad(X, R=TORUS_R):
    x, y, z = X[..., 0], X[..., 1], X[..., 2]
    phi, theta = torus_angles(X, R)
    rho = np.hypot(x, y)
    a = rho - R
    zero = np.zeros_like(x)
    dphi = np.stack([-y / rho**2, x / rho**2, zero], axis=-1)
    da = np.stack([x / rho, y / rho, zero], axis=-1)
    dz = np.stack([zero, zero, np.ones_like(x)], axis=-1)
    dtheta = (a[..., None] * dz - z[..., None] * da) / (a * a + z * z)[..., None]
    s3, c3 = np.sin(3 * phi), np.cos(3 * phi)
    arg = 3 * theta + phi
    u_phi = 3 * c3 * np.cos(arg) - s3 * np.sin(arg)
    u_theta = -3 * s3 * np.sin(arg)
    return u_phi[..., None] * dphi + u_theta[..., None] * dtheta


def torus_minus_laplacian(X, R=TORUS_R, r=TORUS_r):
    phi, theta = torus_angles(X, R)
    rho = R + r * np.cos(theta)
    arg = 3 * theta + phi
    s3, c3 = np.sin(3 * phi), np.cos(3 * phi)
    return (9 * s3 * np.cos(arg) / r**2
            - (-10 * s3 * np.cos(arg) - 6 * c3 * np.sin(arg)) / rho**2
            - 3 * np.sin(theta) * s3 * np.sin(arg) / (r * rho))


# --- flat square ---------------------------------------------------------------

def square_u(X):
    return np.sin(np.pi * X[..., 0]) * np.sin(np.pi * X[..., 1])


def square_grad(X):
    x, y = X[..., 0], X[..., 1]
    return np.stack([np.pi * np.cos(np.pi * x) * np.sin(np.pi * y),
                     np.pi * np.sin(np.pi * x) * np.cos(np.pi * y),
                     np.zeros_like(x)], axis=-1)


def square_minus_laplacian(X):
    return 2 * np.pi**2 * square_u(X)


@dataclass(frozen=True)
class Benchmark:
    name: str
    build_domain: object
    u: object
    grad: object
    minus_laplacian: object
    reaction: bool
    parameters: dict = field(default_factory=dict)

    @property
    def exact(self) -> ExactSolution:
        return ExactSolution(self.u, self.grad)


BENCHMARKS = {
    "quarter_cylinder": Benchmark(
        "quarter_cylinder", quarter_cylinder_domain, cylinder_u, cylinder_grad, cylinder_minus_laplacian,
        reaction=False, parameters={"L": CYL_LENGTH, "sigma": CYL_SIGMA, "rho": CYL_RHO}),
    "torus": Benchmark(
        "torus", torus_domain, torus_u, torus_grad, torus_minus_laplacian,
        reaction=True, parameters={"R": TORUS_R, "r": TORUS_r}),
    "single_patch_poisson": Benchmark(
        "single_patch_poisson", unit_square_domain, square_u, square_grad, square_minus_laplacian,
        reaction=False),
}

JUMPING_ALPHA = (1e-4, 1e4, 1e-4, 1e4)


def get_benchmark(name: str) -> Benchmark:
    try:
        return BENCHMARKS[name]
    except KeyError:
        raise DomainError(f"unknown benchmark {name!r}; choose from {sorted(BENCHMARKS)}") from None


def make_problem(bench: Benchmark, alpha=1.0, reaction: bool | None = None,
                 domain: MultiPatchDomain | None = None) -> ModelProblem:
    """Model problem whose patchwise strong solution is the benchmark ``u``."""
    domain = bench.build_domain() if domain is None else domain
    reaction = bench.reaction if reaction is None else reaction
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    if alpha.size == 1:
        alpha = np.full(domain.num_patches, alpha[0])
    if alpha.shape != (domain.num_patches,):
        raise DomainError(f"expected 1 or {domain.num_patches} diffusion values, got {alpha.size}")
    if np.any(~(alpha > 0)):
        raise DomainError("diffusion coefficients must be positive")

    def source(i, X):
        f = alpha[i] * bench.minus_laplacian(X)
        return f + bench.u(X) if reaction else f

    return ModelProblem(domain, alpha, reaction, source=source, exact=bench.exact)


# --- convergence study ------------------------------------------------------------

def convergence_rate(e_coarse: float, e_fine: float) -> float:
    """Observed order ``log2(e_coarse / e_fine)`` for one halving of ``h``."""
    if not (e_coarse > 0 and e_fine > 0):
        raise DomainError("errors must be positive")
    return math.log2(e_coarse / e_fine)


@dataclass
class ErrorRecord:
    level: int
    dofs: int
    h: list
    dg_error: float
    l2_error: float
    pcg_iters: int
    residual: float
    converged: bool
    dg_rate: float | None = None
    l2_rate: float | None = None

    @property
    def h_max(self) -> float:
        return max(self.h)


@dataclass
class ConvergenceReport:
    benchmark: str
    degree: int
    ratio: int
    alpha: list
    delta: float
    reaction: bool
    records: list = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return any(not r.converged for r in self.records)

    def final_rate(self, kind: str = "dg") -> float | None:
        return getattr(self.records[-1], f"{kind}_rate") if self.records else None

    def to_csv(self, timestamp: str | None = None) -> str:
        buf = io.StringIO()
        if timestamp is not None:
            buf.write(f"# generated {timestamp}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "dofs", "h_max", "dg_error", "dg_rate", "l2_error", "l2_rate", "pcg_iters"])
        for r in self.records:
            w.writerow([r.level, r.dofs, _fmt(r.h_max), _fmt(r.dg_error), _fmt(r.dg_rate),
                        _fmt(r.l2_error), _fmt(r.l2_rate), r.pcg_iters])
        return buf.getvalue()

    def to_json(self) -> str:
        data = asdict(self)
        for rec in data["records"]:
            rec["h_max"] = max(rec["h"])
        return json.dumps(_finite(data), indent=1, sort_keys=True)

    def table(self) -> str:
        lines = [f"{self.benchmark}  p={self.degree}  q={self.ratio}  delta={self.delta:g}  reaction={self.reaction}",
                 f"{'level':>5} {'dofs':>7} {'h_max':>10} {'dG error':>11} {'rate':>6} {'L2 error':>11} {'rate':>6} {'iters':>6}"]
        for r in self.records:
            lines.append(f"{r.level:>5d} {r.dofs:>7d} {r.h_max:>10.4e} {r.dg_error:>11.4e} {_rate(r.dg_rate):>6} "
                         f"{r.l2_error:>11.4e} {_rate(r.l2_rate):>6} {r.pcg_iters:>6d}"
                         + ("" if r.converged else "  (not converged)"))
        return "\n".join(lines)


def _fmt(x):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return ""
    return repr(float(x))


def _rate(x):
    return "-" if x is None else f"{x:.2f}"


def _finite(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite(v) for v in obj]
    return obj


def refinement_levels(num_patches: int, level: int, ratio: int) -> list:
    """Patches with even index get ``ratio`` extra dyadic refinements."""
    return [level + (ratio if i % 2 == 0 else 0) for i in range(num_patches)]


def solve_system(system, solver: str = "pcg", tol: float = 1e-6, max_iter: int | None = None):
    """Solve ``system``; a mean-value constraint, if present, is honoured by both paths."""
    if solver == "pcg":
        x, info = pcg(system.matrix, system.rhs, "jacobi", tol=tol, max_iter=max_iter)
        return system.remove_mean(x), info
    if solver == "direct":
        A, b, m = system.matrix, system.rhs, system.constraint
        if m is None:
            x = direct_solve(A, b)
        else:
            col = sp.csr_matrix(m[:, None])
            K = sp.bmat([[A, col], [col.T, None]], format="csc")
            x = direct_solve(K, np.append(b, 0.0))[:-1]
        res = np.linalg.norm(b - A @ x) / max(np.linalg.norm(b), 1e-300)
        return x, SolveReport(0, float(res), True)
    raise DomainError(f"unknown solver {solver!r}")


def run_convergence_study(bench: Benchmark | str, degree: int, levels: int, ratio: int = 0,
                          penalty: PenaltyConfig | float | None = None, alpha=1.0,
                          reaction: bool | None = None, start_level: int = 1,
                          quad_order: int | None = None, error_order: int | None = None,
                          solver: str = "pcg", tol: float = 1e-6, max_iter: int | None = None,
                          domain: MultiPatchDomain | None = None, problem: ModelProblem | None = None,
                          on_level=None) -> ConvergenceReport:
    """Solve on ``levels`` successive dyadic refinements and record errors.

    Level ``k`` refines odd patches ``start_level + k`` times and even
    patches ``ratio`` times more.  A level whose solve does not converge is
    recorded and the study continues.  ``error_order`` is the Gauss order
    used for error norms (default ``degree + 3``).
    """
    if levels < 1:
        raise DomainError("levels must be >= 1")
    if isinstance(bench, str):
        bench = get_benchmark(bench)
    if penalty is None:
        penalty = PenaltyConfig.for_degree(degree)
    elif not isinstance(penalty, PenaltyConfig):
        penalty = PenaltyConfig(float(penalty))
    if problem is None:
        problem = make_problem(bench, alpha, reaction, domain)
    error_order = degree + 3 if error_order is None else error_order
    report = ConvergenceReport(bench.name, degree, ratio, [float(a) for a in problem.alpha],
                               penalty.delta, problem.reaction)
    for k in range(levels):
        lev = refinement_levels(problem.domain.num_patches, start_level + k, ratio)
        space = DGSpace(problem.domain, degree, lev, quad_order)
        system = build_system(space, problem, penalty)
        x, info = solve_system(system, solver, tol, max_iter)
        if problem.exact is not None:
            e_dg = dg_norm(space, problem, penalty, x, exact=problem.exact, order=error_order)
            e_l2 = l2_norm_error(space, problem, x, order=error_order)
        else:
            e_dg = e_l2 = float("nan")
        rec = ErrorRecord(k, space.ndofs, [float(h) for h in space.h], e_dg, e_l2,
                          info.iterations, info.relative_residual, info.converged)
        if report.records:
            prev = report.records[-1]
            if prev.dg_error > 0 and e_dg > 0:
                rec.dg_rate = convergence_rate(prev.dg_error, e_dg)
            if prev.l2_error > 0 and e_l2 > 0:
                rec.l2_rate = convergence_rate(prev.l2_error, e_l2)
        report.records.append(rec)
        log.info("level %d: %d dofs, dG error %.4e, %d iterations", k, space.ndofs, e_dg, info.iterations)
        if on_level is not None:
            on_level(rec, space, system, x)
        space.release()
    return report
