"""Manufactured solutions, rate computation and the convergence harness."""

import json
import math

import numpy as np
import pytest

from patchdg.benchmarks import (
    BENCHMARKS,
    JUMPING_ALPHA,
    ConvergenceReport,
    ErrorRecord,
    convergence_rate,
    cyl_g1,
    cyl_g2,
    get_benchmark,
    make_problem,
    refinement_levels,
    run_convergence_study,
)
from patchdg.errors import DomainError
from patchdg.geometry import laplace_beltrami_of, pullback_gradient


def sample_interior(domain, rng, n):
    out = []
    for _ in range(n):
        k = int(rng.integers(domain.num_patches))
        patch = domain.patches[k]
        nspan = patch.basis.kv1.num_spans
        # stay off break lines so that the difference stencil sees one smooth piece
        xi1 = (rng.integers(nspan) + rng.uniform(0.05, 0.95)) / nspan
        out.append((patch, np.array([xi1, rng.uniform(0.05, 0.95)])))
    return out


@pytest.mark.parametrize("name", sorted(BENCHMARKS))
def test_source_matches_laplace_beltrami(name, rng):
    bench = get_benchmark(name)
    dom = bench.build_domain()
    worst = 0.0
    for patch, xi in sample_interior(dom, rng, 100):
        lb = laplace_beltrami_of(patch, pullback_gradient(patch, bench.grad), xi)
        X = patch.evaluate(xi[None])[0]
        worst = max(worst, abs(-lb - float(bench.minus_laplacian(X)[0])))
    assert worst <= 1e-4


@pytest.mark.parametrize("name", sorted(BENCHMARKS))
def test_gradient_matches_finite_differences(name, rng):
    bench = get_benchmark(name)
    dom = bench.build_domain()
    h = 1e-6
    for patch, xi in sample_interior(dom, rng, 20):
        _, J = patch.evaluate(xi[None])
        gh = pullback_gradient(patch, bench.grad)(xi[None])[0]
        for d in range(2):
            e = np.zeros(2)
            e[d] = h
            up = bench.u(patch.evaluate((xi + e)[None])[0])[0]
            dn = bench.u(patch.evaluate((xi - e)[None])[0])[0]
            assert gh[d] == pytest.approx((up - dn) / (2 * h), abs=1e-6)


class TestExactSolutions:
    def test_cylinder_vanishes_on_boundary(self, rng):
        bench = get_benchmark("quarter_cylinder")
        z = rng.uniform(0, 4, 10)
        for x, y in ((1.0, 0.0), (0.0, 1.0)):
            X = np.stack([np.full(10, x), np.full(10, y), z], 1)
            np.testing.assert_allclose(bench.u(X), 0.0, atol=1e-15)
        X = np.stack([np.cos(z), np.sin(z), np.zeros(10)], 1)
        np.testing.assert_allclose(bench.u(X), 0.0, atol=1e-15)

    def test_cylinder_profiles(self):
        assert cyl_g1(np.pi / 2) == pytest.approx(0.0, abs=1e-15)
        assert cyl_g2(np.pi / 2) == pytest.approx(1.0, abs=1e-15)
        # rho normalizes the peak of g1 at phi = pi/4 to 1
        assert get_benchmark("quarter_cylinder").parameters["rho"] * cyl_g1(np.pi / 4) == pytest.approx(1.0)

    def test_torus_solution_is_periodic(self):
        bench = get_benchmark("torus")
        X = bench.build_domain().patches[0].evaluate(np.array([[0.0, 0.3], [1.0, 0.3]]))[0]
        assert bench.u(X)[0] == pytest.approx(bench.u(X)[1], abs=1e-14)

    def test_source_with_alpha_and_reaction(self, rng):
        bench = get_benchmark("torus")
        problem = make_problem(bench, JUMPING_ALPHA, reaction=True)
        X = problem.domain.patches[1].evaluate(rng.random((5, 2)))[0]
        np.testing.assert_allclose(problem.source(1, X), 1e4 * bench.minus_laplacian(X) + bench.u(X))

    def test_unknown(self):
        with pytest.raises(DomainError):
            get_benchmark("sphere")

    def test_bad_alpha(self):
        with pytest.raises(DomainError):
            make_problem(get_benchmark("torus"), [1.0, 2.0])
        with pytest.raises(DomainError):
            make_problem(get_benchmark("torus"), -1.0)


class TestRates:
    def test_examples(self):
        assert convergence_rate(0.4, 0.1) == pytest.approx(2.0)
        assert convergence_rate(0.3, 0.3) == 0.0
        assert convergence_rate(0.32, 0.02) == pytest.approx(4.0)

    @pytest.mark.parametrize("a, b", [(0.0, 1.0), (1.0, -1.0)])
    def test_rejects(self, a, b):
        with pytest.raises(DomainError):
            convergence_rate(a, b)

    def test_even_patches_are_finer(self):
        assert refinement_levels(4, 2, 1) == [3, 2, 3, 2]
        assert refinement_levels(4, 1, 0) == [1, 1, 1, 1]


class TestStudy:
    def test_single_patch_rates(self):
        rep = run_convergence_study("single_patch_poisson", 2, 3, start_level=1)
        assert [r.dofs for r in rep.records] == [16, 36, 100]
        assert rep.final_rate("dg") == pytest.approx(2.0, abs=0.25)
        assert rep.final_rate("l2") == pytest.approx(3.0, abs=0.3)
        assert rep.records[0].dg_rate is None
        assert not rep.failed

    def test_frozen_cylinder_errors(self):
        rep = run_convergence_study("quarter_cylinder", 2, 2, start_level=1, solver="direct")
        # regression values of this implementation
        assert rep.records[0].dg_error == pytest.approx(1.98881, rel=1e-4)
        assert rep.records[1].dg_error == pytest.approx(0.301779, rel=1e-4)

    def test_csv_is_deterministic(self):
        a = run_convergence_study("torus", 1, 2, start_level=0).to_csv()
        b = run_convergence_study("torus", 1, 2, start_level=0).to_csv()
        assert a == b
        lines = a.strip().split("\n")
        assert lines[0] == "level,dofs,h_max,dg_error,dg_rate,l2_error,l2_rate,pcg_iters"
        assert len(lines) == 3

    def test_timestamp_line(self):
        rep = run_convergence_study("single_patch_poisson", 1, 1)
        text = rep.to_csv(timestamp="2026-01-01T00:00:00")
        assert text.startswith("# generated 2026-01-01T00:00:00\n")
        assert text.split("\n", 1)[1] == rep.to_csv()

    def test_json(self):
        rep = run_convergence_study("single_patch_poisson", 1, 2)
        data = json.loads(rep.to_json())
        assert data["benchmark"] == "single_patch_poisson"
        assert data["records"][0]["dg_rate"] is None
        assert data["records"][1]["h_max"] == pytest.approx(rep.records[1].h_max)

    def test_non_convergence_is_recorded(self):
        rep = run_convergence_study("single_patch_poisson", 1, 2, start_level=0, max_iter=1)
        assert rep.failed
        assert len(rep.records) == 2
        assert all(math.isfinite(r.dg_error) for r in rep.records)

    def test_callback_sees_every_level(self):
        seen = []
        run_convergence_study("single_patch_poisson", 1, 3, on_level=lambda rec, *_: seen.append(rec.level))
        assert seen == [0, 1, 2]

    def test_table(self):
        rep = ConvergenceReport("x", 2, 0, [1.0], 24.0, False,
                                [ErrorRecord(0, 10, [0.5], 1.0, 0.1, 3, 1e-7, True),
                                 ErrorRecord(1, 40, [0.25], 0.25, 0.0125, 5, 1e-7, True, 2.0, 3.0)])
        assert "2.00" in rep.table() and "3.00" in rep.table()
