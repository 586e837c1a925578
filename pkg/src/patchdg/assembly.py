"""Discontinuous multi-patch spline space and symmetric interior penalty assembly.

The discrete space carries one independent tensor-product B-spline basis
per patch; no degree of freedom is shared between patches.  The bilinear
form is

    a_h(u, v) = sum_i int_{Omega_i} alpha_i grad u . grad v  (+ u v)
              - sum_F int_F alpha_F ({n.grad u}[v] + {n.grad v}[u])
              + sum_F int_F (delta alpha_F / h_F) [u][v]

where ``F`` runs over interior facets (harmonic-mean ``alpha_F``, ``h_F``)
and Dirichlet facets (single-sided traces, ``alpha_i``, ``h_i``).  Each
interior facet is visited once, from its owner side; the interior facet
weights are those of the per-patch sums with every facet appearing in the
sums of both adjacent patches (see :class:`PenaltyConfig`).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DomainError
from .geometry import (
    DIRICHLET,
    NEUMANN,
    MultiPatchDomain,
    conormals,
    metric,
)
from .quadrature import edge_breaks, edge_quadrature, interface_quadrature, segment_rule
from .splines import KnotVector, TensorBasis, basis_derivs, open_knot_vector, refine_dyadic, tensor_eval_many


def harmonic_mean(a: float, b: float) -> float:
    if not (a > 0 and b > 0):
        raise DomainError("harmonic mean needs positive arguments")
    return 2.0 * a * b / (a + b)


def default_penalty(degree: int) -> float:
    return 2.0 * (degree + 2) * (degree + 1)


@dataclass(frozen=True)
class PenaltyConfig:
    """Interior penalty parameter.

    ``interior_sides`` is how many of the per-patch facet sums an interior
    facet enters: 2 means every facet is part of the sums of both patches it
    bounds, so the per-side weights ``alpha_F/2`` and ``delta alpha_F/(2 h_F)``
    add up to the consistent flux weight ``alpha_F``.  With 1 the scheme is
    not consistent (kept for comparison only).
    """

    delta: float
    interior_sides: int = 2

    def __post_init__(self):
        if not self.delta > 0:
            raise DomainError("penalty parameter must be positive")
        if self.interior_sides not in (1, 2):
            raise DomainError("interior_sides must be 1 or 2")

    @classmethod
    def for_degree(cls, degree: int, **kw) -> "PenaltyConfig":
        return cls(default_penalty(degree), **kw)


@dataclass
class ExactSolution:
    """Exact solution given in physical coordinates.

    ``grad`` is the R^3 gradient of any smooth extension; only its tangential
    part is used.
    """

    value: object
    grad: object


@dataclass
class ModelProblem:
    """``-div(alpha grad u) (+ u) = f`` on a multi-patch surface.

    Args:
        domain: multi-patch surface with boundary kinds.
        alpha: one positive diffusion coefficient per patch.
        reaction: include the ``u v`` term.
        source: callable ``(patch_index, X) -> f(X)``.
        neumann: callable ``(patch_index, X) -> g_N(X)`` or ``None``.
        dirichlet: callable ``X -> u_D(X)`` or ``None`` for homogeneous data.
        exact: optional :class:`ExactSolution`.
    """

    domain: MultiPatchDomain
    alpha: np.ndarray
    reaction: bool = True
    source: object = None
    neumann: object = None
    dirichlet: object = None
    exact: ExactSolution | None = None

    def __post_init__(self):
        a = np.broadcast_to(np.asarray(self.alpha, dtype=float), (self.domain.num_patches,)).copy()
        if np.any(~(a > 0)):
            raise DomainError("diffusion coefficients must be positive")
        self.alpha = a

    @property
    def singular(self) -> bool:
        """Constants are in the kernel: no reaction term and no Dirichlet facet."""
        return not self.reaction and not self.domain.facets(DIRICHLET)


def discrete_knot_vector(geom_kv: KnotVector, degree: int, levels: int) -> KnotVector:
    """Degree-``degree`` knot vector over the geometry breaks, refined ``levels`` times.

    Continuity at an interior geometry break never exceeds that of the
    geometry there (``p_geom - m``), so elements stay aligned with the
    smooth pieces of the map.
    """
    breaks, mult = np.unique(geom_kv.knots, return_counts=True)
    cont = geom_kv.degree - mult[1:-1]
    m = np.maximum(1, degree - np.minimum(cont, degree - 1))
    return refine_dyadic(open_knot_vector(breaks, degree, m), levels)


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("PATCHDG_THREADS", "1")))
    except ValueError:
        return 1


class VolumeData:
    """Quadrature grid of one patch: 1D basis tables and geometry at all points."""

    def __init__(self, patch, basis: TensorBasis, order: int):
        self.order = order
        self.dirs = []
        for kv in (basis.kv1, basis.kv2):
            pts, wts = segment_rule(kv.breaks, order)
            E = pts.shape[0]
            spans = np.repeat(kv.span_indices(), order)
            _, ders = basis_derivs(kv, pts.reshape(-1), 1, spans=spans)
            rows = np.repeat(np.arange(spans.size), kv.degree + 1)
            cols = (spans[:, None] - kv.degree + np.arange(kv.degree + 1)).reshape(-1)
            shape = (spans.size, kv.n)
            self.dirs.append({
                "pts": pts, "wts": wts, "E": E,
                "ders": ders.reshape(E, order, 2, kv.degree + 1),
                "first": kv.span_indices() - kv.degree,
                "C0": sp.csr_matrix((ders[:, 0, :].reshape(-1), (rows, cols)), shape=shape),
                "C1": sp.csr_matrix((ders[:, 1, :].reshape(-1), (rows, cols)), shape=shape),
            })
        d1, d2 = self.dirs
        M1, M2 = d1["pts"].size, d2["pts"].size
        grid = np.stack(np.meshgrid(d1["pts"].reshape(-1), d2["pts"].reshape(-1), indexing="ij"), -1)
        X, J = patch.evaluate(grid.reshape(-1, 2))
        _, Finv, g = metric(J)
        self.shape = (M1, M2)
        self.X = X.reshape(M1, M2, 3)
        self.J = J.reshape(M1, M2, 3, 2)
        self.Finv = Finv.reshape(M1, M2, 2, 2)
        self.g = g.reshape(M1, M2)
        self.w = d1["wts"].reshape(-1)[:, None] * d2["wts"].reshape(-1)[None, :]
        self.gw = self.g * self.w

    def values(self, coeffs: np.ndarray):
        """``u``, ``du/dxi1``, ``du/dxi2`` on the grid for coefficients ``(n1, n2)``."""
        C01, C11 = self.dirs[0]["C0"], self.dirs[0]["C1"]
        C02, C12 = self.dirs[1]["C0"], self.dirs[1]["C1"]
        left0 = C01 @ coeffs
        u = (C02 @ left0.T).T
        du1 = (C02 @ (C11 @ coeffs).T).T
        du2 = (C12 @ left0.T).T
        return u, du1, du2

    def integrate_against_basis(self, fgw: np.ndarray) -> np.ndarray:
        """``sum_q fgw_q B_r(xi_q)`` for all basis functions, as ``(n1, n2)``."""
        C01 = self.dirs[0]["C0"]
        C02 = self.dirs[1]["C0"]
        return (C02.T @ (C01.T @ fgw).T).T


@dataclass
class DGSpace:
    """Broken spline space over a multi-patch domain.

    Args:
        domain: the multi-patch surface.
        degree: spline degree used in both directions on every patch.
        levels: per-patch dyadic refinement levels of the discrete mesh.
        quad_order: Gauss points per direction per span (default ``degree + 1``).
    """

    domain: MultiPatchDomain
    degree: int
    levels: list
    quad_order: int | None = None
    bases: list = field(init=False)
    offsets: np.ndarray = field(init=False)
    h: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.degree < 1:
            raise DomainError("degree must be >= 1")
        if np.isscalar(self.levels):
            self.levels = [int(self.levels)] * self.domain.num_patches
        self.levels = [int(k) for k in self.levels]
        if len(self.levels) != self.domain.num_patches:
            raise DomainError("need one refinement level per patch")
        if self.quad_order is None:
            self.quad_order = self.degree + 1
        self.bases = []
        for patch, lev in zip(self.domain.patches, self.levels):
            kv1 = discrete_knot_vector(patch.basis.kv1, self.degree, lev)
            kv2 = discrete_knot_vector(patch.basis.kv2, self.degree, lev)
            self.bases.append(TensorBasis(kv1, kv2))
        sizes = [b.size for b in self.bases]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.h = np.array([patch_mesh_size(p, b) for p, b in zip(self.domain.patches, self.bases)])
        self._volume = {}

    @property
    def ndofs(self) -> int:
        return int(self.offsets[-1])

    def dofs(self, i: int) -> slice:
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))

    def patch_coeffs(self, coeffs: np.ndarray, i: int) -> np.ndarray:
        return np.asarray(coeffs)[self.dofs(i)].reshape(self.bases[i].shape)

    def edge_breaks(self, i: int, edge: int) -> np.ndarray:
        b = self.bases[i]
        return edge_breaks(b.kv1.breaks, b.kv2.breaks, edge)

    def volume(self, i: int, order: int | None = None) -> VolumeData:
        order = self.quad_order if order is None else order
        key = (i, order)
        if key not in self._volume:
            self._volume[key] = VolumeData(self.domain.patches[i], self.bases[i], order)
        return self._volume[key]

    def release(self):
        """Drop cached quadrature grids."""
        self._volume.clear()

    def trace(self, i: int, xi):
        """Basis traces of patch ``i`` at parameter points.

        Returns global indices ``(m, L)``, values ``(m, L)``, tangential
        gradients ``(m, L, 3)`` and Jacobians ``(m, 3, 2)``.
        """
        idx, vals, grads = tensor_eval_many(self.bases[i], xi, 1)
        _, J = self.domain.patches[i].evaluate(xi)
        _, Finv, _ = metric(J)
        sgrad = np.einsum("mkd,mde,mle->mlk", J, Finv, grads)
        return idx + self.offsets[i], vals, sgrad, J

    def evaluate(self, i: int, xi, coeffs):
        """Discrete field value and tangential gradient on patch ``i``."""
        idx, vals, sgrad, _ = self.trace(i, xi)
        c = np.asarray(coeffs)[idx]
        return np.einsum("ml,ml->m", vals, c), np.einsum("mlk,ml->mk", sgrad, c)


def patch_mesh_size(patch, basis: TensorBasis) -> float:
    """Largest physical diameter of a span image, sampled at corners, edge midpoints and center."""
    s = []
    for kv in (basis.kv1, basis.kv2):
        b = kv.breaks
        t = np.empty(2 * b.size - 1)
        t[0::2] = b
        t[1::2] = 0.5 * (b[:-1] + b[1:])
        s.append(t)
    grid = np.stack(np.meshgrid(s[0], s[1], indexing="ij"), -1)
    X = patch.evaluate(grid.reshape(-1, 2), derivs=False)[0].reshape(grid.shape[:2] + (3,))
    E1, E2 = (s[0].size - 1) // 2, (s[1].size - 1) // 2
    samples = []
    for a in range(3):
        for c in range(3):
            samples.append(X[a:a + 2 * E1:2, c:c + 2 * E2:2])
    samples = np.stack(samples, axis=2)  # (E1, E2, 9, 3)
    diff = samples[:, :, :, None, :] - samples[:, :, None, :, :]
    return float(np.sqrt(np.max(np.sum(diff * diff, axis=-1))))


# --- assembly -------------------------------------------------------------------

class _Triplets:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []

    def add(self, idx: np.ndarray, loc: np.ndarray):
        """Scatter local blocks ``loc (k, L, L)`` with dof indices ``idx (k, L)``."""
        L = idx.shape[1]
        self.rows.append(np.repeat(idx, L, axis=1).reshape(-1))
        self.cols.append(np.tile(idx, (1, L)).reshape(-1))
        self.vals.append(loc.reshape(-1))

    def extend(self, other: "_Triplets"):
        self.rows += other.rows
        self.cols += other.cols
        self.vals += other.vals

    def tocsr(self, n: int) -> sp.csr_matrix:
        if not self.rows:
            return sp.csr_matrix((n, n))
        A = sp.coo_matrix((np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
                          shape=(n, n)).tocsr()
        A.sum_duplicates()
        A.sort_indices()
        return A


def _volume_patch(space: DGSpace, i: int, alpha: float, mass: bool) -> _Triplets:
    vd = space.volume(i)
    d1, d2 = vd.dirs
    p1, p2 = space.bases[i].degrees
    n2 = space.bases[i].kv2.n
    nq = vd.order
    E1, E2 = d1["E"], d2["E"]
    L = (p1 + 1) * (p2 + 1)
    B1, D1 = d1["ders"][:, :, 0, :], d1["ders"][:, :, 1, :]
    Finv = vd.Finv.reshape(E1, nq, E2, nq, 2, 2)
    gw = vd.gw.reshape(E1, nq, E2, nq)
    i1 = d1["first"][:, None] + np.arange(p1 + 1)
    out = _Triplets()
    for e2 in range(E2):
        B2, D2 = d2["ders"][e2, :, 0, :], d2["ders"][e2, :, 1, :]
        G0 = (D1[:, :, None, :, None] * B2[None, None, :, None, :]).reshape(E1, nq * nq, L)
        G1 = (B1[:, :, None, :, None] * D2[None, None, :, None, :]).reshape(E1, nq * nq, L)
        w = gw[:, :, e2, :].reshape(E1, nq * nq)
        K = alpha * Finv[:, :, e2, :].reshape(E1, nq * nq, 2, 2) * w[:, :, None, None]
        H0 = K[..., 0, 0, None] * G0 + K[..., 0, 1, None] * G1
        H1 = K[..., 1, 0, None] * G0 + K[..., 1, 1, None] * G1
        loc = np.einsum("eqr,eqs->ers", H0, G0) + np.einsum("eqr,eqs->ers", H1, G1)
        if mass:
            N = (B1[:, :, None, :, None] * B2[None, None, :, None, :]).reshape(E1, nq * nq, L)
            loc += np.einsum("eqr,eqs->ers", N * w[:, :, None], N)
        i2 = d2["first"][e2] + np.arange(p2 + 1)
        idx = (i1[:, :, None] * n2 + i2[None, None, :]).reshape(E1, L) + space.offsets[i]
        out.add(idx, loc)
    return out


def assemble_volume(space: DGSpace, problem: ModelProblem, mass: bool | None = None) -> sp.csr_matrix:
    """Patchwise ``alpha_i grad u . grad v`` (plus ``u v`` with reaction)."""
    mass = problem.reaction if mass is None else mass
    jobs = range(space.domain.num_patches)
    threads = _thread_count()
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(lambda i: _volume_patch(space, i, problem.alpha[i], mass), jobs))
    else:
        parts = [_volume_patch(space, i, problem.alpha[i], mass) for i in jobs]
    trip = _Triplets()
    for p in parts:
        trip.extend(p)
    return trip.tocsr(space.ndofs)


def assemble_mass(space: DGSpace) -> sp.csr_matrix:
    trip = _Triplets()
    for i in range(space.domain.num_patches):
        vd = space.volume(i)
        d1, d2 = vd.dirs
        p1, p2 = space.bases[i].degrees
        n2 = space.bases[i].kv2.n
        nq, E1, E2 = vd.order, d1["E"], d2["E"]
        L = (p1 + 1) * (p2 + 1)
        B1 = d1["ders"][:, :, 0, :]
        gw = vd.gw.reshape(E1, nq, E2, nq)
        i1 = d1["first"][:, None] + np.arange(p1 + 1)
        for e2 in range(E2):
            B2 = d2["ders"][e2, :, 0, :]
            N = (B1[:, :, None, :, None] * B2[None, None, :, None, :]).reshape(E1, nq * nq, L)
            w = gw[:, :, e2, :].reshape(E1, nq * nq)
            loc = np.einsum("eqr,eqs->ers", N * w[:, :, None], N)
            i2 = d2["first"][e2] + np.arange(p2 + 1)
            trip.add((i1[:, :, None] * n2 + i2[None, None, :]).reshape(E1, L) + space.offsets[i], loc)
    return trip.tocsr(space.ndofs)


def interface_coefficients(space: DGSpace, problem: ModelProblem, penalty: PenaltyConfig, iface):
    """Flux and penalty weights ``(alpha_F, delta alpha_F / h_F)`` of an interior facet."""
    a = harmonic_mean(problem.alpha[iface.owner], problem.alpha[iface.neighbor])
    h = harmonic_mean(space.h[iface.owner], space.h[iface.neighbor])
    scale = 0.5 * penalty.interior_sides
    return scale * a, scale * penalty.delta * a / h


def interface_traces(space: DGSpace, iface, order: int | None = None):
    """Quadrature and side traces on an interface.

    Returns ``(iq, idx, jump, avg_flux)``: the merged quadrature, the
    combined dof indices of both sides, the jump ``[phi] = phi_i - phi_j``
    and the averaged co-normal flux ``{n_i . grad phi}`` of every local
    basis function.
    """
    order = space.quad_order if order is None else order
    iq = interface_quadrature(space.domain, iface, order,
                              space.edge_breaks(iface.owner, iface.edge_i),
                              space.edge_breaks(iface.neighbor, iface.edge_j))
    idx_i, val_i, sg_i, J_i = space.trace(iface.owner, iq.xi_i)
    idx_j, val_j, sg_j, _ = space.trace(iface.neighbor, iq.xi_j)
    n = conormals(J_i, iface.edge_i)
    idx = np.concatenate([idx_i, idx_j], axis=1)
    jump = np.concatenate([val_i, -val_j], axis=1)
    flux = 0.5 * np.concatenate([np.einsum("mlk,mk->ml", sg_i, n), np.einsum("mlk,mk->ml", sg_j, n)], axis=1)
    return iq, idx, jump, flux


def _facet_blocks(w, jump, flux, c_flux, c_pen, consistency=True):
    loc = c_pen * jump[:, :, None] * jump[:, None, :]
    if consistency:
        loc = loc - c_flux * (flux[:, :, None] * jump[:, None, :] + jump[:, :, None] * flux[:, None, :])
    return loc * w[:, None, None]


def assemble_interface(space: DGSpace, problem: ModelProblem, penalty: PenaltyConfig,
                       consistency: bool = True) -> sp.csr_matrix:
    """Consistency/symmetry (subtracted) and penalty terms on all interior facets."""
    trip = _Triplets()
    for iface in space.domain.interfaces:
        c_flux, c_pen = interface_coefficients(space, problem, penalty, iface)
        iq, idx, jump, flux = interface_traces(space, iface)
        trip.add(idx, _facet_blocks(iq.weights, jump, flux, c_flux, c_pen, consistency))
    return trip.tocsr(space.ndofs)


def dirichlet_traces(space: DGSpace, facet, order: int | None = None):
    order = space.quad_order if order is None else order
    patch = space.domain.patches[facet.patch]
    _, xi, X, _, w = edge_quadrature(patch, facet.edge, order, space.edge_breaks(facet.patch, facet.edge))
    idx, vals, sgrad, J = space.trace(facet.patch, xi)
    n = conormals(J, facet.edge)
    return X, w, idx, vals, np.einsum("mlk,mk->ml", sgrad, n)


def assemble_dirichlet(space: DGSpace, problem: ModelProblem, penalty: PenaltyConfig,
                       consistency: bool = True):
    """Nitsche terms on Dirichlet facets.

    Returns ``(matrix, rhs)``; the right-hand side vanishes for homogeneous data.
    """
    trip = _Triplets()
    rhs = np.zeros(space.ndofs)
    for facet in space.domain.facets(DIRICHLET):
        i = facet.patch
        c_flux = problem.alpha[i]
        c_pen = penalty.delta * problem.alpha[i] / space.h[i]
        X, w, idx, vals, flux = dirichlet_traces(space, facet)
        trip.add(idx, _facet_blocks(w, vals, flux, c_flux, c_pen, consistency))
        if problem.dirichlet is not None:
            uD = problem.dirichlet(X)
            contrib = w[:, None] * uD[:, None] * (c_pen * vals - (c_flux * flux if consistency else 0.0))
            np.add.at(rhs, idx, contrib)
    return trip.tocsr(space.ndofs), rhs


def assemble_rhs(space: DGSpace, problem: ModelProblem) -> np.ndarray:
    """Source and Neumann contributions of the linear form."""
    b = np.zeros(space.ndofs)
    if problem.source is not None:
        for i in range(space.domain.num_patches):
            vd = space.volume(i)
            f = np.asarray(problem.source(i, vd.X.reshape(-1, 3)), dtype=float).reshape(vd.shape)
            b[space.dofs(i)] = vd.integrate_against_basis(f * vd.gw).reshape(-1)
    if problem.neumann is not None:
        for facet in space.domain.facets(NEUMANN):
            patch = space.domain.patches[facet.patch]
            _, xi, X, _, w = edge_quadrature(patch, facet.edge, space.quad_order,
                                             space.edge_breaks(facet.patch, facet.edge))
            idx, vals, _ = tensor_eval_many(space.bases[facet.patch], xi, 0)
            gN = np.asarray(problem.neumann(facet.patch, X), dtype=float)
            np.add.at(b, idx + space.offsets[facet.patch], (w * gN)[:, None] * vals)
    return b


@dataclass
class DGSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    space: DGSpace
    # ``m_r = int phi_r``; set when the solution is fixed by ``int u_h = 0``
    constraint: np.ndarray | None = None

    @property
    def ndofs(self) -> int:
        return self.space.ndofs

    def remove_mean(self, x: np.ndarray) -> np.ndarray:
        """Shift ``x`` by a constant so that ``int u_h = 0`` (no-op without constraint)."""
        if self.constraint is None:
            return x
        return x - (self.constraint @ x) / self.constraint.sum()


def build_system(space: DGSpace, problem: ModelProblem, penalty: PenaltyConfig) -> DGSystem:
    A = assemble_volume(space, problem)
    A = A + assemble_interface(space, problem, penalty)
    AD, bD = assemble_dirichlet(space, problem, penalty)
    A = A + AD
    # exact symmetry; the two triangles differ only by rounding
    A = (0.5 * (A + A.T)).tocsr()
    A.sort_indices()
    b = assemble_rhs(space, problem) + bD
    if not problem.singular:
        return DGSystem(A, b, space)
    # the all-ones vector spans the kernel; make b compatible with it
    m = assemble_mass(space) @ np.ones(space.ndofs)
    b = b - (b.sum() / m.sum()) * m
    return DGSystem(A, b, space, constraint=m)


def assemble_norm_matrix(space: DGSpace, problem: ModelProblem, penalty: PenaltyConfig) -> sp.csr_matrix:
    """Gram matrix of the squared dG norm on the discrete space."""
    N = assemble_volume(space, problem, mass=False) + assemble_mass(space)
    N = N + assemble_interface(space, problem, penalty, consistency=False)
    N = N + assemble_dirichlet(space, problem, penalty, consistency=False)[0]
    return (0.5 * (N + N.T)).tocsr()
