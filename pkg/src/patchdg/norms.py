"""Broken dG norms and error measures.

A *field* is either a discrete coefficient vector ``v_h`` or, when an exact
solution is passed, the error ``u - v_h`` evaluated pointwise.
"""

from __future__ import annotations

import numpy as np

from .assembly import DGSpace, ModelProblem, PenaltyConfig, dirichlet_traces, interface_coefficients
from .errors import DomainError
from .geometry import BOTTOM, DIRICHLET, LEFT, RIGHT, TOP, metric
from .quadrature import edge_quadrature, interface_quadrature


def _exact_on(exact, X, J=None, Finv=None):
    """Exact value and tangential gradient at physical points.

    The callbacks always receive flat ``(m, 3)`` point arrays.
    """
    shape = X.shape[:-1]
    flat = X.reshape(-1, 3)
    u = np.asarray(exact.value(flat), dtype=float).reshape(shape)
    if J is None:
        return u, None
    G = np.asarray(exact.grad(flat), dtype=float).reshape(shape + (3,))
    # tangential projection J F^{-1} J^T
    gh = np.einsum("...kd,...k->...d", J, G)
    sg = np.einsum("...kd,...de,...e->...k", J, Finv, gh)
    return u, sg


def volume_terms(space: DGSpace, coeffs, exact=None, order=None):
    """Per-patch ``(||grad v||^2, ||v||^2)`` over each patch."""
    out = []
    coeffs = np.zeros(space.ndofs) if coeffs is None else np.asarray(coeffs, dtype=float)
    for i in range(space.domain.num_patches):
        vd = space.volume(i, order)
        u, d1, d2 = vd.values(space.patch_coeffs(coeffs, i))
        gh = np.stack([d1, d2], axis=-1)
        sg = np.einsum("abkd,abde,abe->abk", vd.J, vd.Finv, gh)
        if exact is not None:
            ue, sge = _exact_on(exact, vd.X, vd.J, vd.Finv)
            u = ue - u
            sg = sge - sg
        out.append((float(np.sum(np.sum(sg * sg, axis=-1) * vd.gw)), float(np.sum(u * u * vd.gw))))
    return out


def jump_terms(space: DGSpace, problem: ModelProblem, penalty: PenaltyConfig, coeffs, exact=None, order=None):
    """Weighted squared jumps on interior facets and Dirichlet facets (as one total)."""
    order = space.quad_order if order is None else order
    coeffs = np.zeros(space.ndofs) if coeffs is None else np.asarray(coeffs, dtype=float)
    total = 0.0
    for iface in space.domain.interfaces:
        _, c_pen = interface_coefficients(space, problem, penalty, iface)
        iq = interface_quadrature(space.domain, iface, order,
                                  space.edge_breaks(iface.owner, iface.edge_i),
                                  space.edge_breaks(iface.neighbor, iface.edge_j))
        vi, _ = space.evaluate(iface.owner, iq.xi_i, coeffs)
        vj, _ = space.evaluate(iface.neighbor, iq.xi_j, coeffs)
        # the exact solution has no jump; [u - v_h] = -[v_h]
        jump = vi - vj
        total += c_pen * float(np.sum(iq.weights * jump * jump))
    for facet in space.domain.facets(DIRICHLET):
        i = facet.patch
        c_pen = penalty.delta * problem.alpha[i] / space.h[i]
        X, w, idx, vals, _ = dirichlet_traces(space, facet, order)
        v = np.einsum("ml,ml->m", vals, coeffs[idx])
        if exact is not None:
            v = np.asarray(exact.value(X), dtype=float) - v
        total += c_pen * float(np.sum(w * v * v))
    return total


def boundary_gradient_terms(space: DGSpace, coeffs, exact=None, order=None):
    """Per-patch ``||grad v_i||^2`` over the whole patch boundary."""
    order = space.quad_order if order is None else order
    coeffs = np.zeros(space.ndofs) if coeffs is None else np.asarray(coeffs, dtype=float)
    out = []
    for i, patch in enumerate(space.domain.patches):
        s = 0.0
        for edge in (LEFT, RIGHT, BOTTOM, TOP):
            _, xi, X, J, w = edge_quadrature(patch, edge, order, space.edge_breaks(i, edge))
            _, sg = space.evaluate(i, xi, coeffs)
            if exact is not None:
                _, Finv, _ = metric(J)
                _, sge = _exact_on(exact, X, J, Finv)
                sg = sge - sg
            s += float(np.sum(w * np.sum(sg * sg, axis=1)))
        out.append(s)
    return out


def dg_norm_squared(space, problem, penalty, coeffs=None, exact=None, order=None) -> float:
    vol = volume_terms(space, coeffs, exact, order)
    s = sum(problem.alpha[i] * g + m for i, (g, m) in enumerate(vol))
    return s + jump_terms(space, problem, penalty, coeffs, exact, order)


def dg_norm(space: DGSpace, problem: ModelProblem, penalty: PenaltyConfig, coeffs=None,
            exact=None, order: int | None = None) -> float:
    """Broken energy norm: ``alpha``-weighted gradients, L2 part and penalized jumps.

    With ``exact`` the norm of ``exact - v_h`` is returned.
    """
    return float(np.sqrt(dg_norm_squared(space, problem, penalty, coeffs, exact, order)))


def dg_star_norm(space: DGSpace, problem: ModelProblem, penalty: PenaltyConfig, coeffs=None,
                 exact=None, order: int | None = None) -> float:
    """dG norm augmented with ``alpha_i h_i ||grad v_i||^2`` on every patch boundary."""
    s = dg_norm_squared(space, problem, penalty, coeffs, exact, order)
    bnd = boundary_gradient_terms(space, coeffs, exact, order)
    s += sum(problem.alpha[i] * space.h[i] * b for i, b in enumerate(bnd))
    return float(np.sqrt(s))


def l2_norm_error(space: DGSpace, problem: ModelProblem, coeffs, order: int | None = None, exact=None) -> float:
    """Broken L2 error of ``coeffs`` against the exact solution."""
    exact = problem.exact if exact is None else exact
    if exact is None:
        raise DomainError("problem has no exact solution")
    vol = volume_terms(space, coeffs, exact, order)
    return float(np.sqrt(sum(m for _, m in vol)))


def interface_penalty_energy(space, problem, penalty, coeffs, order=None) -> float:
    """Weighted squared jumps of a discrete field across interior facets only."""
    order = space.quad_order if order is None else order
    total = 0.0
    for iface in space.domain.interfaces:
        _, c_pen = interface_coefficients(space, problem, penalty, iface)
        iq = interface_quadrature(space.domain, iface, order,
                                  space.edge_breaks(iface.owner, iface.edge_i),
                                  space.edge_breaks(iface.neighbor, iface.edge_j))
        vi, _ = space.evaluate(iface.owner, iq.xi_i, coeffs)
        vj, _ = space.evaluate(iface.neighbor, iq.xi_j, coeffs)
        total += c_pen * float(np.sum(iq.weights * (vi - vj) ** 2))
    return total
