"""B-spline bases, refinement and tensor products."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import cox_de_boor, knot_vectors, random_knot_vector
from patchdg.errors import DomainError
from patchdg.splines import (
    KnotVector,
    TensorBasis,
    basis_derivs,
    collocation_matrix,
    dyadic_midpoints,
    eval_basis,
    eval_basis_derivs,
    find_span,
    insert_knots,
    open_knot_vector,
    refine_dyadic,
    tensor_eval,
    tensor_eval_many,
)

LINEAR = KnotVector([0, 0, 1, 1], 1)
QUADRATIC = KnotVector([0, 0, 0, 1, 1, 1], 2)
HALVES = KnotVector([0, 0, 0.5, 1, 1], 1)


class TestKnotVector:
    def test_counts(self):
        kv = KnotVector([0, 0, 0, 0.25, 0.25, 0.5, 0.5, 0.75, 0.75, 1, 1, 1], 2)
        assert kv.n == 9
        assert kv.num_spans == 4
        np.testing.assert_array_equal(kv.breaks, [0, 0.25, 0.5, 0.75, 1])
        np.testing.assert_array_equal(kv.multiplicities, [3, 2, 2, 2, 3])

    @pytest.mark.parametrize("knots, degree", [
        ([0, 0, 1], 1),               # too short
        ([0, 0, 0.5, 0.4, 1, 1], 1),  # decreasing
        ([0, 1, 1], 0),               # degree 0 unsupported
        ([0, 0, 0, 1, 1], 1),         # end multiplicity p+2
        ([0, 0, 2, 2], 1),            # not on [0, 1]
    ])
    def test_rejects_invalid(self, knots, degree):
        with pytest.raises(DomainError):
            KnotVector(knots, degree)

    def test_open_knot_vector(self):
        kv = open_knot_vector([0, 0.5, 1], 2, multiplicities=[2])
        np.testing.assert_array_equal(kv.knots, [0, 0, 0, 0.5, 0.5, 1, 1, 1])

    def test_equality_and_hash(self):
        a = KnotVector([0, 0, 0.5, 1, 1], 1)
        assert a == HALVES and hash(a) == hash(HALVES)
        assert a != refine_dyadic(a, 1)


class TestFindSpan:
    def test_interior_point(self):
        assert find_span(HALVES, 0.25) == 1  # span [0, 0.5)

    def test_right_end_maps_to_last_span(self):
        assert find_span(HALVES, 1.0) == 2

    def test_half_open_at_break(self):
        assert find_span(HALVES, 0.5) == 2

    @pytest.mark.parametrize("x", [-0.1, 1.0 + 1e-9, np.nan])
    def test_outside_domain(self, x):
        with pytest.raises(DomainError):
            find_span(HALVES, x)


class TestEvaluation:
    def test_hat_functions(self):
        np.testing.assert_allclose(eval_basis(LINEAR, 0.3), [0.7, 0.3], atol=1e-15)

    def test_bernstein_midpoint(self):
        np.testing.assert_allclose(eval_basis(QUADRATIC, 0.5), [0.25, 0.5, 0.25], atol=1e-15)

    def test_hat_slopes(self):
        np.testing.assert_allclose(eval_basis_derivs(LINEAR, 0.3, 1)[1], [-1.0, 1.0], atol=1e-14)

    def test_bernstein_slopes(self):
        # d/dx of (1-x)^2, 2x(1-x), x^2 at 1/2
        np.testing.assert_allclose(eval_basis_derivs(QUADRATIC, 0.5, 1)[1], [-1.0, 0.0, 1.0], atol=1e-14)

    def test_order_above_degree(self):
        with pytest.raises(DomainError):
            eval_basis_derivs(LINEAR, 0.3, 2)

    def test_matches_cox_de_boor(self, rng):
        for p in range(1, 6):
            kv = random_knot_vector(rng, p)
            x = np.concatenate([rng.random(20), [0.0, 1.0]])
            dense = collocation_matrix(kv, x)[0]
            ref = np.array([[cox_de_boor(kv.knots, p, i, xx) for i in range(kv.n)] for xx in x])
            np.testing.assert_allclose(dense, ref, atol=1e-13)

    def test_second_derivative_of_cubic(self):
        kv = KnotVector([0, 0, 0, 0, 1, 1, 1, 1], 3)
        # B_0 = (1-x)^3, B_0'' = 6(1-x)
        assert eval_basis_derivs(kv, 0.2, 2)[2, 0] == pytest.approx(4.8, abs=1e-12)

    def test_derivatives_against_finite_differences(self, rng):
        h = 1e-6
        for p in range(1, 6):
            kv = random_knot_vector(rng, p)
            for x in rng.uniform(0.01, 0.99, 30):
                if np.min(np.abs(kv.breaks - x)) < 1e-3:
                    continue
                dense = collocation_matrix(kv, [x - h, x, x + h], 1)
                fd = (dense[0, 2] - dense[0, 0]) / (2 * h)
                np.testing.assert_allclose(dense[1, 1], fd, rtol=1e-5, atol=1e-5 * np.abs(fd).max())

    def test_local_support(self, rng):
        kv = random_knot_vector(rng, 3)
        x = rng.random(200)
        dense = collocation_matrix(kv, x)[0]
        for i in range(kv.n):
            outside = (x < kv.knots[i]) | (x > kv.knots[i + kv.degree + 1])
            assert np.all(dense[outside, i] == 0.0)


@settings(max_examples=200, deadline=None)
@given(kv=knot_vectors(), x=st.floats(0.0, 1.0))
def test_partition_of_unity_property(kv, x):
    _, d = basis_derivs(kv, [x], 1)
    assert abs(d[0, 0].sum() - 1.0) <= 1e-12
    assert np.all(d[0, 0] >= -1e-15)
    assert abs(d[0, 1].sum()) <= 1e-10 * max(1.0, np.abs(d[0, 1]).max())


class TestRefinement:
    def test_one_level(self):
        np.testing.assert_array_equal(refine_dyadic(LINEAR, 1).knots, [0, 0, 0.5, 1, 1])

    def test_two_levels(self):
        np.testing.assert_array_equal(refine_dyadic(LINEAR, 2).knots, [0, 0, 0.25, 0.5, 0.75, 1, 1])

    def test_zero_levels_is_identity(self):
        assert refine_dyadic(HALVES, 0) == HALVES

    def test_keeps_multiplicity_of_existing_knots(self):
        kv = KnotVector([0, 0, 0, 0.5, 0.5, 1, 1, 1], 2)
        fine = refine_dyadic(kv, 1)
        np.testing.assert_array_equal(fine.knots, [0, 0, 0, 0.25, 0.5, 0.5, 0.75, 1, 1, 1])

    def test_midpoints(self):
        np.testing.assert_allclose(dyadic_midpoints(HALVES, 1), [0.25, 0.75])

    def test_insertion_reproduces_function(self, rng):
        for p in range(1, 6):
            kv = random_knot_vector(rng, p, max_interior=3)
            coef = rng.standard_normal((kv.n, 2))
            for levels in (1, 2):
                fine, fcoef = insert_knots(kv, coef, dyadic_midpoints(kv, levels))
                assert fine == refine_dyadic(kv, levels)
                x = rng.random(50)
                np.testing.assert_allclose(collocation_matrix(fine, x)[0] @ fcoef,
                                           collocation_matrix(kv, x)[0] @ coef, atol=1e-12)


class TestTensor:
    def test_bilinear_values(self):
        idx, vals, _ = tensor_eval(TensorBasis(LINEAR, LINEAR), (0.3, 0.4))
        # B_(i1,i2) = B_i1(0.3) B_i2(0.4) with flat index i1 * 2 + i2
        expected = {0: 0.7 * 0.6, 1: 0.7 * 0.4, 2: 0.3 * 0.6, 3: 0.3 * 0.4}
        for k, v in zip(idx, vals):
            assert v == pytest.approx(expected[k], abs=1e-15)
        np.testing.assert_allclose(np.sort(vals), np.sort([0.42, 0.18, 0.28, 0.12]), atol=1e-15)

    def test_sums(self, rng):
        tb = TensorBasis(random_knot_vector(rng, 2), random_knot_vector(rng, 3))
        _, vals, grads = tensor_eval_many(tb, rng.random((100, 2)))
        np.testing.assert_allclose(vals.sum(1), 1.0, atol=1e-12)
        np.testing.assert_allclose(grads.sum(1), 0.0, atol=1e-9)

    def test_indices_are_in_range(self, rng):
        tb = TensorBasis(random_knot_vector(rng, 2), random_knot_vector(rng, 1))
        idx, _, _ = tensor_eval_many(tb, rng.random((50, 2)))
        assert idx.min() >= 0 and idx.max() < tb.size
        assert tb.num_local == idx.shape[1] == 6
