"""NURBS surface patches, multi-patch topology and surface pullbacks.

A patch is a rational tensor-product map ``Phi: [0,1]^2 -> R^3``.  Surface
calculus is done in the parameter domain: with ``J = dPhi/dxi`` (3x2),
``F = J^T J`` and ``g = sqrt(det F)`` the tangential gradient of a function
with parametric gradient ``grad_hat`` is ``J F^{-1} grad_hat``.

Edges of the unit square are numbered

====  ===========  ===================
id    location     edge parameter ``t``
====  ===========  ===================
0     ``xi1 = 0``  ``xi2``
1     ``xi1 = 1``  ``xi2``
2     ``xi2 = 0``  ``xi1``
3     ``xi2 = 1``  ``xi1``
====  ===========  ===================
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, GeometryError, TopologyError
from .splines import (
    KnotVector,
    TensorBasis,
    dyadic_midpoints,
    find_spans,
    insert_knots,
    tensor_eval_many,
)

LEFT, RIGHT, BOTTOM, TOP = 0, 1, 2, 3
EDGE_NAMES = {"left": LEFT, "right": RIGHT, "bottom": BOTTOM, "top": TOP}

DIRICHLET = "dirichlet"
NEUMANN = "neumann"

CONFORMITY_TOL = 1e-10
DEGENERACY_TOL = 1e-14

# (fixed coordinate axis, fixed value, running axis, outward sign)
_EDGES = {
    LEFT: (0, 0.0, 1, -1.0),
    RIGHT: (0, 1.0, 1, 1.0),
    BOTTOM: (1, 0.0, 0, -1.0),
    TOP: (1, 1.0, 0, 1.0),
}


def edge_points(edge: int, t) -> np.ndarray:
    """Parameter points ``(m, 2)`` on ``edge`` for edge coordinates ``t``."""
    axis, value, run, _ = _EDGES[edge]
    t = np.atleast_1d(np.asarray(t, dtype=float))
    xi = np.empty((t.size, 2))
    xi[:, axis] = value
    xi[:, run] = t
    return xi


def edge_tangent(edge: int) -> np.ndarray:
    """Parametric unit tangent along ``edge`` (direction of increasing ``t``)."""
    tau = np.zeros(2)
    tau[_EDGES[edge][2]] = 1.0
    return tau


def edge_normal(edge: int) -> np.ndarray:
    """Outward parametric unit normal of ``edge``."""
    axis, _, _, sign = _EDGES[edge]
    nu = np.zeros(2)
    nu[axis] = sign
    return nu


def edge_axis(edge: int) -> int:
    """Parameter direction that runs along ``edge``."""
    return _EDGES[edge][2]


@dataclass(frozen=True)
class FirstFundamental:
    J: np.ndarray
    F: np.ndarray
    g: float


def metric(J: np.ndarray):
    """First fundamental form, its inverse and area element for ``J`` of shape ``(..., 3, 2)``."""
    F = np.einsum("...ki,...kj->...ij", J, J)
    det = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    if np.any(~(det > DEGENERACY_TOL)):
        raise GeometryError("degenerate parameterization: det F <= %g" % DEGENERACY_TOL)
    Finv = np.empty_like(F)
    Finv[..., 0, 0] = F[..., 1, 1] / det
    Finv[..., 1, 1] = F[..., 0, 0] / det
    Finv[..., 0, 1] = -F[..., 0, 1] / det
    Finv[..., 1, 0] = -F[..., 1, 0] / det
    return F, Finv, np.sqrt(det)


class SurfacePatch:
    """Rational tensor-product surface patch.

    Args:
        basis: tensor-product B-spline basis.
        control_points: array ``(n1, n2, 3)``.
        weights: array ``(n1, n2)`` of positive weights; ``None`` means a
            plain B-spline patch.
    """

    def __init__(self, basis: TensorBasis, control_points, weights=None):
        cp = np.array(control_points, dtype=float)
        if cp.shape != basis.shape + (3,):
            raise GeometryError(f"control points must have shape {basis.shape + (3,)}, got {cp.shape}")
        w = np.ones(basis.shape) if weights is None else np.array(weights, dtype=float)
        if w.shape != basis.shape:
            raise GeometryError(f"weights must have shape {basis.shape}")
        if np.any(w <= 0):
            raise GeometryError("weights must be positive")
        cp.setflags(write=False)
        w.setflags(write=False)
        self.basis = basis
        self.control_points = cp
        self.weights = w
        self._wcp = (cp * w[..., None]).reshape(-1, 3)
        self._wflat = w.reshape(-1)

    @property
    def is_rational(self) -> bool:
        return not np.all(self.weights == 1.0)

    def __repr__(self):
        kv1, kv2 = self.basis.kv1, self.basis.kv2
        return f"<SurfacePatch degrees=({kv1.degree},{kv2.degree}) shape={self.basis.shape}>"

    def evaluate(self, xi, derivs: bool = True):
        """Points ``X (m, 3)`` and, if requested, Jacobians ``J (m, 3, 2)``."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        idx, vals, grads = tensor_eval_many(self.basis, xi, 1 if derivs else 0)
        w = self._wflat[idx]
        wc = self._wcp[idx]
        W = np.einsum("ml,ml->m", vals, w)
        S = np.einsum("ml,mlk->mk", vals, wc)
        X = S / W[:, None]
        if not derivs:
            return X, None
        dW = np.einsum("mld,ml->md", grads, w)
        dS = np.einsum("mld,mlk->mkd", grads, wc)
        J = (dS - X[:, :, None] * dW[:, None, :]) / W[:, None, None]
        return X, J

    def refine(self, levels1: int, levels2: int | None = None) -> "SurfacePatch":
        """Exact h-refinement of the control net (Boehm insertion in homogeneous coordinates)."""
        if levels2 is None:
            levels2 = levels1
        kv1, kv2 = self.basis.kv1, self.basis.kv2
        hom = np.concatenate([self.control_points * self.weights[..., None], self.weights[..., None]], axis=-1)
        new1, hom = insert_knots(kv1, hom, dyadic_midpoints(kv1, levels1), axis=0)
        new2, hom = insert_knots(kv2, hom, dyadic_midpoints(kv2, levels2), axis=1)
        w = hom[..., 3]
        return SurfacePatch(TensorBasis(new1, new2), hom[..., :3] / w[..., None], w)


def _check_xi(xi):
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < 0.0) or np.any(xi > 1.0):
        raise DomainError("parameter point outside [0,1]^2")
    return xi


def map_point(patch: SurfacePatch, xi) -> np.ndarray:
    xi = _check_xi(xi)
    return patch.evaluate(xi[None, :], derivs=False)[0][0]


def fundamental(patch: SurfacePatch, xi) -> FirstFundamental:
    xi = _check_xi(xi)
    _, J = patch.evaluate(xi[None, :])
    F, _, g = metric(J)
    return FirstFundamental(J[0], F[0], float(g[0]))


def surface_gradient_coeffs(ff: FirstFundamental) -> np.ndarray:
    """``G = J F^{-1}``, mapping parametric gradients to tangential gradients."""
    _, Finv, _ = metric(ff.J[None])
    return ff.J @ Finv[0]


def normals(J: np.ndarray) -> np.ndarray:
    n = np.cross(J[..., 0], J[..., 1])
    norm = np.linalg.norm(n, axis=-1)
    if np.any(norm < DEGENERACY_TOL):
        raise GeometryError("tangent vectors are linearly dependent")
    return n / norm[..., None]


def surface_normal(patch: SurfacePatch, xi) -> np.ndarray:
    xi = _check_xi(xi)
    _, J = patch.evaluate(xi[None, :])
    return normals(J)[0]


def conormals(J: np.ndarray, edge: int) -> np.ndarray:
    """Outward unit co-normals ``(m, 3)`` on ``edge`` from Jacobians ``(m, 3, 2)``."""
    _, Finv, _ = metric(J)
    if np.any(np.linalg.norm(J @ edge_tangent(edge), axis=-1) < DEGENERACY_TOL):
        raise GeometryError("degenerate edge tangent")
    c = np.einsum("...kd,...d->...k", J, Finv @ edge_normal(edge))
    return c / np.linalg.norm(c, axis=-1)[..., None]


def conormal(patch: SurfacePatch, edge_id: int, t: float) -> np.ndarray:
    if not 0.0 <= t <= 1.0:
        raise DomainError("edge parameter outside [0,1]")
    _, J = patch.evaluate(edge_points(edge_id, t))
    return conormals(J, edge_id)[0]


def pullback_gradient(patch: SurfacePatch, ambient_grad):
    """Parametric gradient of ``u o Phi`` given the R^3 gradient of an extension of ``u``."""

    def grad_hat(xi):
        X, J = patch.evaluate(xi)
        return np.einsum("mkd,mk->md", J, ambient_grad(X))

    return grad_hat


def laplace_beltrami_of(patch: SurfacePatch, grad_hat, xi, step: float = 1e-5) -> float:
    """Laplace-Beltrami of a scalar field at a parameter point.

    The field enters through ``grad_hat`` (callable ``(m, 2) -> (m, 2)``).
    The outer divergence of ``g F^{-1} grad_hat`` is taken by central
    differences with step ``step`` times the local knot-span length.  For
    verification only.
    """
    xi = np.asarray(xi, dtype=float)
    hs = []
    for d, kv in enumerate((patch.basis.kv1, patch.basis.kv2)):
        s = find_spans(kv, xi[d])[0]
        h = step * (kv.knots[s + 1] - kv.knots[s])
        if xi[d] - h <= 0.0 or xi[d] + h >= 1.0:
            raise DomainError("point too close to the patch boundary for the difference stencil")
        hs.append(h)
    pts = np.array([
        xi + [hs[0], 0.0], xi - [hs[0], 0.0],
        xi + [0.0, hs[1]], xi - [0.0, hs[1]],
        xi,
    ])
    _, J = patch.evaluate(pts)
    _, Finv, g = metric(J)
    V = g[:, None] * np.einsum("mij,mj->mi", Finv, grad_hat(pts))
    div = (V[0, 0] - V[1, 0]) / (2 * hs[0]) + (V[2, 1] - V[3, 1]) / (2 * hs[1])
    return float(div / g[4])


# --- multi-patch topology -----------------------------------------------------

@dataclass(frozen=True)
class Interface:
    """Whole-edge gluing of ``owner`` edge ``edge_i`` to ``neighbor`` edge ``edge_j``.

    With ``flipped`` the neighbor edge coordinate is ``1 - t``.
    """

    owner: int
    neighbor: int
    edge_i: int
    edge_j: int
    flipped: bool = False

    def swapped(self) -> "Interface":
        return Interface(self.neighbor, self.owner, self.edge_j, self.edge_i, self.flipped)


@dataclass(frozen=True)
class BoundaryFacet:
    patch: int
    edge: int
    kind: str = DIRICHLET


@dataclass
class MultiPatchDomain:
    patches: list
    interfaces: list = field(default_factory=list)
    boundary: list = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for f in self.interfaces:
            for p, e in ((f.owner, f.edge_i), (f.neighbor, f.edge_j)):
                if (p, e) in seen:
                    raise TopologyError(f"edge {e} of patch {p} used twice")
                seen.add((p, e))
        for b in self.boundary:
            if b.kind not in (DIRICHLET, NEUMANN):
                raise TopologyError(f"unknown boundary kind {b.kind!r}")
            if (b.patch, b.edge) in seen:
                raise TopologyError(f"edge {b.edge} of patch {b.patch} is both interface and boundary")
            seen.add((b.patch, b.edge))

    @property
    def num_patches(self) -> int:
        return len(self.patches)

    @property
    def is_closed(self) -> bool:
        return not self.boundary

    def facets(self, kind: str):
        return [b for b in self.boundary if b.kind == kind]

    def check_conformity(self, samples: int = 17):
        """Raise :class:`TopologyError` if any interface is not geometrically conforming."""
        t = np.linspace(0.0, 1.0, samples)
        for f in self.interfaces:
            interface_pullback(self, f, t)

    def refine(self, levels) -> "MultiPatchDomain":
        """Refine every patch (``levels``: int or per-patch list)."""
        if np.isscalar(levels):
            levels = [levels] * self.num_patches
        patches = [p.refine(int(k)) for p, k in zip(self.patches, levels)]
        return MultiPatchDomain(patches, list(self.interfaces), list(self.boundary))


def neighbor_coordinate(iface: Interface, t):
    t = np.asarray(t, dtype=float)
    return 1.0 - t if iface.flipped else t


def interface_pullback(domain: MultiPatchDomain, iface: Interface, t):
    """Parameter points on both sides of ``iface`` for edge coordinates ``t``.

    Returns ``(xi_i, xi_j)``; each of shape ``(m, 2)``, or ``(2,)`` for scalar
    ``t``.
    """
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise DomainError("edge parameter outside [0,1]")
    xi_i = edge_points(iface.edge_i, t)
    xi_j = edge_points(iface.edge_j, neighbor_coordinate(iface, t))
    Xi = domain.patches[iface.owner].evaluate(xi_i, derivs=False)[0]
    Xj = domain.patches[iface.neighbor].evaluate(xi_j, derivs=False)[0]
    gap = np.max(np.linalg.norm(Xi - Xj, axis=1))
    if gap > CONFORMITY_TOL:
        raise TopologyError(
            f"interface {iface.owner}:{iface.edge_i} <-> {iface.neighbor}:{iface.edge_j} "
            f"does not conform (gap {gap:.3e})"
        )
    if scalar:
        return xi_i[0], xi_j[0]
    return xi_i, xi_j


# --- benchmark geometries -----------------------------------------------------

_S = np.sqrt(0.5)


def unit_square_patch(origin=(0.0, 0.0), size=1.0) -> SurfacePatch:
    kv = KnotVector([0, 0, 1, 1], 1)
    x0, y0 = origin
    cp = np.array([[[x0, y0, 0.0], [x0, y0 + size, 0.0]],
                   [[x0 + size, y0, 0.0], [x0 + size, y0 + size, 0.0]]])
    return SurfacePatch(TensorBasis(kv, kv), cp)


def unit_square_domain(kind: str = DIRICHLET) -> MultiPatchDomain:
    """Single flat patch ``[0,1]^2 x {0}`` with all edges of the given kind."""
    return MultiPatchDomain([unit_square_patch()], [], [BoundaryFacet(0, e, kind) for e in range(4)])


def two_squares_domain(kind: str | None = DIRICHLET) -> MultiPatchDomain:
    """Two unit squares side by side, glued along ``x = 1``.

    With ``kind=None`` the outer edges are left without boundary facets.
    """
    patches = [unit_square_patch(), unit_square_patch(origin=(1.0, 0.0))]
    boundary = []
    if kind is not None:
        boundary = [BoundaryFacet(0, e, kind) for e in (LEFT, BOTTOM, TOP)]
        boundary += [BoundaryFacet(1, e, kind) for e in (RIGHT, BOTTOM, TOP)]
    return MultiPatchDomain(patches, [Interface(0, 1, RIGHT, LEFT)], boundary)


def quarter_cylinder_domain(length: float = 4.0, num_patches: int = 4, radius: float = 1.0) -> MultiPatchDomain:
    """Quarter cylinder in the first quadrant, stacked into equal-height patches.

    ``xi1`` runs along the arc from ``(r, 0)`` to ``(0, r)``, ``xi2`` along
    ``z``.  All boundary edges are Dirichlet.
    """
    kv1 = KnotVector([0, 0, 0, 1, 1, 1], 2)
    kv2 = KnotVector([0, 0, 1, 1], 1)
    arc = radius * np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    w_arc = np.array([1.0, _S, 1.0])
    height = length / num_patches
    patches = []
    for k in range(num_patches):
        cp = np.zeros((3, 2, 3))
        for a in range(3):
            for b in range(2):
                cp[a, b] = [arc[a, 0], arc[a, 1], (k + b) * height]
        patches.append(SurfacePatch(TensorBasis(kv1, kv2), cp, np.repeat(w_arc[:, None], 2, axis=1)))
    interfaces = [Interface(k, k + 1, TOP, BOTTOM) for k in range(num_patches - 1)]
    boundary = [BoundaryFacet(k, e) for k in range(num_patches) for e in (LEFT, RIGHT)]
    boundary += [BoundaryFacet(0, BOTTOM), BoundaryFacet(num_patches - 1, TOP)]
    return MultiPatchDomain(patches, interfaces, boundary)


def full_circle():
    """Nine-point rational unit circle on the four-arc knot vector."""
    kv = KnotVector([0, 0, 0, 0.25, 0.25, 0.5, 0.5, 0.75, 0.75, 1, 1, 1], 2)
    pts = np.array([[1, 0], [1, 1], [0, 1], [-1, 1], [-1, 0], [-1, -1], [0, -1], [1, -1], [1, 0]], dtype=float)
    w = np.array([1, _S, 1, _S, 1, _S, 1, _S, 1])
    return kv, pts, w


def torus_domain(major: float = 2.0, minor: float = 1.0, corner_weight: float | None = None) -> MultiPatchDomain:
    """Torus as four patches of revolution.

    ``xi1`` runs once around the z-axis (toroidal angle), ``xi2`` over a
    quarter of the tube cross-section.  Each patch is glued to itself along
    ``xi1 = 0 / xi1 = 1`` and to its neighbors along ``xi2``.
    ``corner_weight`` overrides the ``1/sqrt(2)`` weights of the tube arcs
    (fault injection for verification).
    """
    kv1, circ, wc = full_circle()
    kv2 = KnotVector([0, 0, 0, 1, 1, 1], 2)
    wq = np.array([1.0, _S if corner_weight is None else corner_weight, 1.0])
    patches = []
    for k in range(4):
        t0, t1 = k * np.pi / 2, (k + 1) * np.pi / 2
        c0 = np.array([np.cos(t0), np.sin(t0)])
        c1 = np.array([np.cos(t1), np.sin(t1)])
        prof = np.array([major + minor * np.array([c0[0], c0[0] + c1[0], c1[0]]),
                         minor * np.array([c0[1], c0[1] + c1[1], c1[1]])]).T
        cp = np.zeros((9, 3, 3))
        cp[..., 0] = circ[:, None, 0] * prof[None, :, 0]
        cp[..., 1] = circ[:, None, 1] * prof[None, :, 0]
        cp[..., 2] = np.broadcast_to(prof[None, :, 1], (9, 3))
        patches.append(SurfacePatch(TensorBasis(kv1, kv2), cp, wc[:, None] * wq[None, :]))
    interfaces = [Interface(k, k, RIGHT, LEFT) for k in range(4)]
    interfaces += [Interface(k, (k + 1) % 4, TOP, BOTTOM) for k in range(4)]
    return MultiPatchDomain(patches, interfaces, [])


# --- serialization -------------------------------------------------------------

def _kv_to_dict(kv: KnotVector):
    return {"degree": kv.degree, "knots": [float(k) for k in kv.knots]}


def domain_to_dict(domain: MultiPatchDomain) -> dict:
    patches = []
    for p in domain.patches:
        patches.append({
            "knots": [_kv_to_dict(p.basis.kv1), _kv_to_dict(p.basis.kv2)],
            "control_points": p.control_points.tolist(),
            "weights": p.weights.tolist(),
        })
    return {
        "patches": patches,
        "interfaces": [
            {"owner": f.owner, "neighbor": f.neighbor, "edge_owner": f.edge_i,
             "edge_neighbor": f.edge_j, "flipped": f.flipped}
            for f in domain.interfaces
        ],
        "boundary": [{"patch": b.patch, "edge": b.edge, "kind": b.kind} for b in domain.boundary],
    }


def _edge_id(e):
    if isinstance(e, str):
        return EDGE_NAMES[e]
    return int(e)


def domain_from_dict(data: dict) -> MultiPatchDomain:
    patches = []
    for p in data["patches"]:
        kvs = [KnotVector(k["knots"], k["degree"]) for k in p["knots"]]
        patches.append(SurfacePatch(TensorBasis(*kvs), p["control_points"], p.get("weights")))
    interfaces = [
        Interface(int(f["owner"]), int(f["neighbor"]), _edge_id(f["edge_owner"]),
                  _edge_id(f["edge_neighbor"]), bool(f.get("flipped", False)))
        for f in data.get("interfaces", [])
    ]
    boundary = [BoundaryFacet(int(b["patch"]), _edge_id(b["edge"]), b.get("kind", DIRICHLET))
                for b in data.get("boundary", [])]
    return MultiPatchDomain(patches, interfaces, boundary)


def save_domain(domain: MultiPatchDomain, path) -> None:
    Path(path).write_text(json.dumps(domain_to_dict(domain), indent=1))


def load_domain(path) -> MultiPatchDomain:
    return domain_from_dict(json.loads(Path(path).read_text()))
