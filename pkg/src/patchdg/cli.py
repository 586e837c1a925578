"""Command-line front end.

    patchdg run --benchmark quarter_cylinder --degree 2 --levels 4 --ratio 0
    patchdg run --problem problem.json --degree 2 --levels 3
    patchdg verify

Exit codes: 0 success, 1 check or solve failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import DGSpace, ModelProblem, PenaltyConfig, build_system
from .benchmarks import (
    BENCHMARKS,
    cylinder_grad,
    cylinder_minus_laplacian,
    get_benchmark,
    make_problem,
    run_convergence_study,
    torus_grad,
    torus_minus_laplacian,
)
from .errors import DomainError, PatchDGError
from .geometry import (
    DIRICHLET,
    NEUMANN,
    BoundaryFacet,
    MultiPatchDomain,
    laplace_beltrami_of,
    load_domain,
    pullback_gradient,
    quarter_cylinder_domain,
    torus_domain,
)
from .quadrature import domain_area
from .solver import dense_cholesky, dump_matrix_market, min_eigen_estimate, symmetry_defect
from .splines import KnotVector, basis_derivs

log = logging.getLogger("patchdg")


@dataclass
class RunConfig:
    benchmark: str | None
    problem: str | None
    degree: int
    levels: int
    ratio: int
    start_level: int
    alpha: list | float
    penalty: float | None
    reaction: bool | None
    quad_order: int | None
    solver: str
    tol: float
    out: str | None
    fmt: str
    dump_matrix: str | None = None


def _parse_alpha(text: str):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid --alpha {text!r}") from None
    if any(not v > 0 for v in vals):
        raise argparse.ArgumentTypeError("--alpha values must be positive")
    return vals[0] if len(vals) == 1 else vals


def _parse_penalty(text: str):
    if text == "auto":
        return None
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("--penalty must be 'auto' or a positive number") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("--penalty must be positive")
    return v


def _parse_onoff(text: str):
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _positive(kind, minimum):
    def parse(text):
        v = kind(text)
        if v < minimum:
            raise argparse.ArgumentTypeError(f"must be >= {minimum}")
        return v
    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="patchdg", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a convergence study")
    run.add_argument("--benchmark", choices=sorted(BENCHMARKS))
    run.add_argument("--problem", help="problem description file (JSON)")
    run.add_argument("--degree", type=_positive(int, 1), default=2)
    run.add_argument("--levels", type=_positive(int, 1), default=4)
    run.add_argument("--ratio", type=_positive(int, 0), default=0,
                     help="even patches get RATIO extra refinements (h_i/h_j = 2^RATIO)")
    run.add_argument("--start-level", type=_positive(int, 0), default=1)
    run.add_argument("--alpha", type=_parse_alpha, default=None, help="v or v1,v2,... per patch")
    run.add_argument("--penalty", type=_parse_penalty, default=None, help="auto or a value for delta")
    run.add_argument("--reaction", type=_parse_onoff, default=None, help="on|off")
    run.add_argument("--quadrature-order", type=_positive(int, 1), default=None)
    run.add_argument("--solver", choices=("pcg", "direct"), default="pcg")
    run.add_argument("--tol", type=float, default=1e-6)
    run.add_argument("--out", help="report path")
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.add_argument("--dump-matrix", help="write the finest-level matrix in Matrix Market format")

    ver = sub.add_parser("verify", help="run the oracle checks")
    ver.add_argument("--quadrature-order", type=_positive(int, 1), default=None,
                     help="Gauss points per span for the area checks (default: geometry degree + 2)")
    ver.add_argument("--torus-file", help="torus geometry file to check instead of the built-in one")
    return parser


def _config(args, parser) -> RunConfig:
    if not args.benchmark and not args.problem:
        parser.error("one of --benchmark or --problem is required")
    if args.benchmark and args.problem:
        parser.error("--benchmark and --problem are mutually exclusive")
    return RunConfig(args.benchmark, args.problem, args.degree, args.levels, args.ratio, args.start_level,
                     args.alpha, args.penalty, args.reaction, args.quadrature_order, args.solver,
                     args.tol, args.out, args.format, args.dump_matrix)


def load_problem(path) -> tuple:
    """Read a problem file; returns ``(benchmark, problem)``.

    Keys: ``geometry`` (path, relative to the file), ``alpha`` (number or
    list), ``reaction`` (bool), optional ``boundary`` overriding the
    geometry file's boundary kinds, and ``source``: either a benchmark name
    or ``{"custom": value}`` for a constant source without exact solution.
    """
    path = Path(path)
    data = json.loads(path.read_text())
    domain = load_domain(path.parent / data["geometry"])
    if "boundary" in data:
        domain = MultiPatchDomain(domain.patches, domain.interfaces,
                                  [BoundaryFacet(int(b["patch"]), int(b["edge"]), b.get("kind", DIRICHLET))
                                   for b in data["boundary"]])
    alpha = data.get("alpha", 1.0)
    source = data.get("source", "custom")
    if isinstance(source, str) and source != "custom":
        bench = get_benchmark(source)
        return bench, make_problem(bench, alpha, data.get("reaction"), domain)
    value = float(source.get("custom", 0.0)) if isinstance(source, dict) else 0.0
    gN = float(data.get("neumann", 0.0))
    problem = ModelProblem(
        domain, alpha, bool(data.get("reaction", True)),
        source=lambda i, X: np.full(X.shape[0], value),
        neumann=(lambda i, X: np.full(X.shape[0], gN)) if domain.facets(NEUMANN) else None,
    )
    return get_benchmark("single_patch_poisson"), problem


def cmd_run(cfg: RunConfig, stream=None) -> int:
    stream = sys.stdout if stream is None else stream
    problem = None
    if cfg.problem:
        bench, problem = load_problem(cfg.problem)
        if cfg.alpha is not None or cfg.reaction is not None:
            alpha = problem.alpha if cfg.alpha is None else cfg.alpha
            reaction = problem.reaction if cfg.reaction is None else cfg.reaction
            problem = make_problem(bench, alpha, reaction, problem.domain) if problem.exact else \
                ModelProblem(problem.domain, alpha, reaction, problem.source, problem.neumann)
    else:
        bench = get_benchmark(cfg.benchmark)
    penalty = PenaltyConfig.for_degree(cfg.degree) if cfg.penalty is None else PenaltyConfig(cfg.penalty)
    finest = {}

    def keep(rec, space, system, x):
        finest["system"] = system

    report = run_convergence_study(
        bench, cfg.degree, cfg.levels, cfg.ratio, penalty,
        alpha=1.0 if cfg.alpha is None else cfg.alpha, reaction=cfg.reaction,
        start_level=cfg.start_level, quad_order=cfg.quad_order, solver=cfg.solver, tol=cfg.tol,
        problem=problem, on_level=keep if cfg.dump_matrix else None)
    if problem is not None and problem.exact is None:
        report.benchmark = "custom"
    print(report.table(), file=stream)
    if cfg.out:
        stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        text = report.to_csv(timestamp=stamp) if cfg.fmt == "csv" else report.to_json()
        Path(cfg.out).write_text(text)
    if cfg.dump_matrix:
        dump_matrix_market(finest["system"].matrix, cfg.dump_matrix)
    if report.failed:
        print("error: at least one level did not converge", file=sys.stderr)
        return 1
    return 0


# --- verification ------------------------------------------------------------------

def _check(name, ok, detail, stream):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}", file=stream)
    return bool(ok)


def verify_checks(quad_order=None, torus=None, stream=None) -> bool:
    """Oracle suite; prints one line per check and returns overall success."""
    stream = sys.stdout if stream is None else stream
    rng = np.random.default_rng(12345)
    results = []

    worst = 0.0
    for p in range(1, 6):
        for _ in range(40):
            interior = np.sort(rng.random(rng.integers(0, 6)))
            kv = KnotVector(np.concatenate([np.zeros(p + 1), interior, np.ones(p + 1)]), p)
            _, d = basis_derivs(kv, rng.random(5), 1)
            worst = max(worst, np.abs(d[:, 0].sum(1) - 1).max(), np.abs(d[:, 1].sum(1)).max() * 1e-2)
    results.append(_check("partition of unity", worst <= 1e-12, f"max defect {worst:.2e}", stream))

    cyl = quarter_cylinder_domain()
    torus = torus_domain() if torus is None else torus
    # the rational arc makes g non-polynomial; degree + 1 points leave ~3e-8 on the cylinder
    order = 4 if quad_order is None else quad_order
    a_cyl = domain_area(cyl.refine(2), order)
    results.append(_check("quarter-cylinder area", abs(a_cyl - 2 * np.pi) <= 1e-8,
                          f"{a_cyl:.12f} vs 2*pi", stream))
    a_tor = domain_area(torus.refine(2), order)
    results.append(_check("torus area", abs(a_tor - 8 * np.pi**2) <= 1e-6,
                          f"{a_tor:.10f} vs 8*pi^2", stream))

    res = 0.0
    for patch in torus.patches:
        X, J = patch.evaluate(rng.random((2500, 2)))
        rho = np.hypot(X[:, 0], X[:, 1])
        res = max(res, np.abs((rho - 2.0) ** 2 + X[:, 2] ** 2 - 1.0).max())
    results.append(_check("torus implicit equation", res <= 1e-10, f"max residual {res:.2e}", stream))

    lb = 0.0
    for dom, grad, mlap in ((cyl, cylinder_grad, cylinder_minus_laplacian),
                            (torus_domain(), torus_grad, torus_minus_laplacian)):
        for _ in range(100):
            k = rng.integers(dom.num_patches)
            patch = dom.patches[k]
            xi = rng.uniform(0.01, 0.99, 2)
            if patch.basis.kv1.num_spans > 1:
                xi[0] = (rng.integers(4) + rng.uniform(0.05, 0.95)) / 4
            val = -laplace_beltrami_of(patch, pullback_gradient(patch, grad), xi)
            X = patch.evaluate(xi[None])[0]
            lb = max(lb, abs(val - float(mlap(X)[0])))
    results.append(_check("manufactured sources", lb <= 1e-4, f"max |(-Lap u) - f| {lb:.2e}", stream))

    for name, dom, p in (("quarter_cylinder", cyl, 1), ("torus", torus_domain(), 2)):
        problem = make_problem(get_benchmark(name), 1.0, None, dom)
        space = DGSpace(dom, p, 0)
        system = build_system(space, problem, PenaltyConfig.for_degree(p))
        asym = symmetry_defect(system.matrix)
        results.append(_check(f"{name} symmetry", asym <= 1e-12, f"defect {asym:.2e}", stream))
        lam = min_eigen_estimate(system.matrix)
        try:
            dense_cholesky(system.matrix, system.rhs)
            chol = True
        except PatchDGError:
            chol = False
        results.append(_check(f"{name} coercivity", chol and lam > 0, f"min eigenvalue {lam:.3e}", stream))
    return all(results)


def cmd_verify(quad_order=None, torus_file=None, stream=None) -> int:
    stream = sys.stdout if stream is None else stream
    torus = load_domain(torus_file) if torus_file else None
    ok = verify_checks(quad_order, torus, stream)
    print("all checks passed" if ok else "some checks FAILED", file=stream)
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return cmd_run(_config(args, parser))
        return cmd_verify(args.quadrature_order, args.torus_file)
    except DomainError as exc:
        # inconsistent configuration detected once the geometry is known
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except PatchDGError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
