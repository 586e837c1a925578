import numpy as np
import pytest

from patchdg.assembly import DGSpace
from patchdg.errors import DomainError
from patchdg.geometry import Interface, MultiPatchDomain, RIGHT, LEFT, quarter_cylinder_domain, torus_domain, unit_square_patch
from patchdg.quadrature import (
    domain_area,
    edge_quadrature,
    element_quadrature,
    gauss_legendre,
    interface_quadrature,
    merge_breaks,
    patch_area,
    segment_rule,
)

CYL = quarter_cylinder_domain()


class TestGaussLegendre:
    def test_one_point(self):
        rule = gauss_legendre(1)
        np.testing.assert_allclose(rule.points, [0.0])
        np.testing.assert_allclose(rule.weights, [2.0])

    def test_two_points(self):
        rule = gauss_legendre(2)
        np.testing.assert_allclose(rule.points, [-1 / np.sqrt(3), 1 / np.sqrt(3)], atol=1e-15)
        np.testing.assert_allclose(rule.weights, [1.0, 1.0], atol=1e-15)

    def test_quartic_with_three_points(self):
        rule = gauss_legendre(3)
        assert np.dot(rule.weights, rule.points**4) == pytest.approx(0.4, abs=1e-15)

    @pytest.mark.parametrize("n", [1, 2, 4, 7, 12])
    def test_exact_for_degree_2n_minus_1(self, n):
        rule = gauss_legendre(n)
        for k in range(2 * n):
            exact = 0.0 if k % 2 else 2.0 / (k + 1)
            assert np.dot(rule.weights, rule.points**k) == pytest.approx(exact, abs=1e-13)

    @pytest.mark.parametrize("n", [0, -1, 65])
    def test_out_of_range(self, n):
        with pytest.raises(DomainError):
            gauss_legendre(n)

    def test_segments_skip_empty_spans(self):
        pts, wts = segment_rule([0.0, 0.5, 0.5, 1.0], 2)
        assert pts.shape == (2, 2)
        assert wts.sum() == pytest.approx(1.0)


class TestElementQuadrature:
    def test_flat_unit_patch(self):
        _, w = element_quadrature(unit_square_patch(), ((0, 1), (0, 1)), 2)
        assert w.sum() == pytest.approx(1.0, abs=1e-15)

    def test_degenerate_span(self):
        xi, w = element_quadrature(unit_square_patch(), ((0.5, 0.5), (0, 1)), 3)
        assert xi.shape == (0, 2) and w.size == 0

    def test_mapped_polynomial_exactness(self):
        # affine image of the square with area scale 6: int x^a y^b exact for a, b <= 2n-1
        patch = unit_square_patch(origin=(1.0, -1.0), size=1.0)
        patch = type(patch)(patch.basis, patch.control_points * [2.0, 3.0, 1.0])
        xi, w = element_quadrature(patch, ((0, 1), (0, 1)), 3)
        X = patch.evaluate(xi, derivs=False)[0]
        approx = np.sum(w * X[:, 0] ** 5 * X[:, 1] ** 4)
        exact = (4.0**6 - 2.0**6) / 6 * (0.0**5 - (-3.0) ** 5) / 5
        assert approx == pytest.approx(exact, rel=1e-12)

    def test_cylinder_patch_area(self):
        assert patch_area(CYL.patches[0].refine(2), 5) == pytest.approx(np.pi / 2, abs=1e-10)

    def test_cylinder_total_area(self):
        assert abs(domain_area(CYL.refine(2), 4) - 2 * np.pi) <= 1e-8

    def test_cylinder_area_with_degree_plus_one_points(self):
        # the rational arc is not integrated exactly; frozen value of the remainder
        err = abs(domain_area(CYL.refine(2), 3) - 2 * np.pi)
        assert err == pytest.approx(3.29e-8, rel=0.01)

    def test_torus_area(self):
        assert abs(domain_area(torus_domain().refine(2), 3) - 8 * np.pi**2) <= 1e-6

    def test_under_integration_is_visible(self):
        assert abs(domain_area(torus_domain().refine(2), 1) - 8 * np.pi**2) > 1e-2


class TestInterfaceQuadrature:
    def test_merge(self):
        np.testing.assert_allclose(merge_breaks([0, 0.5, 1], [0, 0.25, 0.5, 0.75, 1]), [0, 0.25, 0.5, 0.75, 1])

    def test_merge_with_rounding(self):
        assert merge_breaks([0, 1 / 3, 1], [0, 1 / 3 + 1e-14, 1]).size == 3

    def test_matching_single_span(self):
        iq = interface_quadrature(CYL, CYL.interfaces[0], 3)
        np.testing.assert_allclose(iq.breaks, [0, 1])
        assert iq.t.size == 3

    def test_non_matching_breaks(self):
        space = DGSpace(CYL, 2, [1, 2, 1, 2])
        f = CYL.interfaces[0]
        iq = interface_quadrature(CYL, f, 3, space.edge_breaks(0, f.edge_i), space.edge_breaks(1, f.edge_j))
        np.testing.assert_allclose(iq.breaks, [0, 0.25, 0.5, 0.75, 1])

    def test_ring_length(self):
        for f in CYL.interfaces:
            assert interface_quadrature(CYL, f, 6, np.linspace(0, 1, 5)).weights.sum() == pytest.approx(np.pi / 2, abs=1e-10)

    def test_both_sides_agree(self, rng):
        dom = torus_domain()
        c = rng.standard_normal(3)

        def field(X):
            return c[0] * X[:, 0] ** 2 + c[1] * np.sin(X[:, 1]) + c[2] * X[:, 2]

        for f in dom.interfaces:
            a = interface_quadrature(dom, f, 8, np.linspace(0, 1, 9))
            b = interface_quadrature(dom, f.swapped(), 8, None, np.linspace(0, 1, 9))
            Xb = dom.patches[f.neighbor].evaluate(b.xi_i)[0]
            assert np.sum(a.weights * field(a.points)) == pytest.approx(np.sum(b.weights * field(Xb)), abs=1e-10)

    def test_traces_are_polynomial_per_segment(self, rng):
        # flat geometry: the product of traces from both sides is a polynomial on each merged segment
        dom = MultiPatchDomain([unit_square_patch(), unit_square_patch(origin=(1.0, 0.0))],
                               [Interface(0, 1, RIGHT, LEFT)])
        space = DGSpace(dom, 2, [1, 2])
        c = rng.standard_normal(space.ndofs)
        f = dom.interfaces[0]
        vals = []
        for order in (3, 5):
            iq = interface_quadrature(dom, f, order, space.edge_breaks(0, RIGHT), space.edge_breaks(1, LEFT))
            vi, _ = space.evaluate(0, iq.xi_i, c)
            vj, _ = space.evaluate(1, iq.xi_j, c)
            vals.append(np.sum(iq.weights * vi * vj))
        assert vals[0] == pytest.approx(vals[1], abs=1e-12)

    def test_edge_quadrature_length(self):
        w = edge_quadrature(CYL.patches[0], LEFT, 2)[-1]
        assert w.sum() == pytest.approx(1.0, abs=1e-14)
