"""Gauss-Legendre rules, knot-span surface quadrature and merged interface quadrature."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError
from .geometry import (
    Interface,
    MultiPatchDomain,
    SurfacePatch,
    edge_axis,
    edge_points,
    edge_tangent,
    interface_pullback,
    metric,
    neighbor_coordinate,
)

MAX_POINTS = 64
BREAK_TOL = 1e-12


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray
    weights: np.ndarray

    @property
    def order(self) -> int:
        return self.points.size


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> QuadRule:
    """``n``-point Gauss-Legendre rule on ``[-1, 1]``."""
    if not 1 <= n <= MAX_POINTS:
        raise DomainError(f"number of Gauss points must be in [1, {MAX_POINTS}], got {n}")
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadRule(x, w)


def segment_rule(breaks, order: int):
    """Gauss points and weights on every non-empty segment of ``breaks``.

    Returns arrays of shape ``(num_segments, order)``.
    """
    b = np.asarray(breaks, dtype=float)
    a, c = b[:-1], b[1:]
    keep = c - a > 0
    a, c = a[keep], c[keep]
    rule = gauss_legendre(order)
    half = 0.5 * (c - a)
    pts = 0.5 * (a + c)[:, None] + half[:, None] * rule.points[None, :]
    wts = half[:, None] * rule.weights[None, :]
    return pts, wts


def element_quadrature(patch: SurfacePatch, span, order: int):
    """Tensor Gauss points on one span rectangle with area-weighted weights.

    Args:
        span: ``((a1, b1), (a2, b2))``.

    Returns:
        ``(xi, w)`` with ``xi (order**2, 2)`` and ``w = weight * g(xi)``;
        empty arrays for a degenerate span.
    """
    (a1, b1), (a2, b2) = span
    if b1 <= a1 or b2 <= a2:
        return np.zeros((0, 2)), np.zeros(0)
    p1, w1 = segment_rule([a1, b1], order)
    p2, w2 = segment_rule([a2, b2], order)
    xi = np.stack(np.meshgrid(p1[0], p2[0], indexing="ij"), axis=-1).reshape(-1, 2)
    w = (w1[0][:, None] * w2[0][None, :]).reshape(-1)
    _, J = patch.evaluate(xi)
    _, _, g = metric(J)
    return xi, w * g


def patch_area(patch: SurfacePatch, order: int, breaks1=None, breaks2=None) -> float:
    """Area of a patch by span-wise Gauss quadrature."""
    b1 = patch.basis.kv1.breaks if breaks1 is None else breaks1
    b2 = patch.basis.kv2.breaks if breaks2 is None else breaks2
    total = 0.0
    for a1, c1 in zip(b1[:-1], b1[1:]):
        for a2, c2 in zip(b2[:-1], b2[1:]):
            total += element_quadrature(patch, ((a1, c1), (a2, c2)), order)[1].sum()
    return total


def domain_area(domain: MultiPatchDomain, order: int) -> float:
    return sum(patch_area(p, order) for p in domain.patches)


def merge_breaks(*arrays) -> np.ndarray:
    """Sorted union of break sets, merging values closer than ``BREAK_TOL``."""
    b = np.sort(np.concatenate([np.asarray(a, dtype=float) for a in arrays]))
    keep = np.concatenate([[True], np.diff(b) > BREAK_TOL])
    return b[keep]


@dataclass(frozen=True)
class InterfaceQuadrature:
    """Quadrature on an interface, aligned with the knot lines of both sides.

    ``weights`` already contain the arc-length factor ``ds``.
    """

    interface: Interface
    breaks: np.ndarray
    t: np.ndarray
    xi_i: np.ndarray
    xi_j: np.ndarray
    points: np.ndarray
    weights: np.ndarray


def edge_breaks(breaks1, breaks2, edge: int) -> np.ndarray:
    return np.asarray(breaks1 if edge_axis(edge) == 0 else breaks2)


def interface_quadrature(domain: MultiPatchDomain, iface: Interface, order: int,
                         breaks_i=None, breaks_j=None) -> InterfaceQuadrature:
    """Merged quadrature for ``iface``.

    ``breaks_i`` / ``breaks_j`` are the break values of the two sides along
    the interface, in each side's own edge coordinate; they default to the
    geometry knots of the patches.
    """
    Pi = domain.patches[iface.owner]
    Pj = domain.patches[iface.neighbor]
    if breaks_i is None:
        breaks_i = edge_breaks(Pi.basis.kv1.breaks, Pi.basis.kv2.breaks, iface.edge_i)
    if breaks_j is None:
        breaks_j = edge_breaks(Pj.basis.kv1.breaks, Pj.basis.kv2.breaks, iface.edge_j)
    merged = merge_breaks(breaks_i, neighbor_coordinate(iface, np.asarray(breaks_j)))
    pts, wts = segment_rule(merged, order)
    t = pts.reshape(-1)
    xi_i, xi_j = interface_pullback(domain, iface, t)
    X, J = Pi.evaluate(xi_i)
    ds = np.linalg.norm(J @ edge_tangent(iface.edge_i), axis=1)
    return InterfaceQuadrature(iface, merged, t, xi_i, xi_j, X, wts.reshape(-1) * ds)


def edge_quadrature(patch: SurfacePatch, edge: int, order: int, breaks=None):
    """Gauss points on one edge of a patch: ``(t, xi, X, J, w)`` with ``w`` including ``ds``."""
    if breaks is None:
        breaks = edge_breaks(patch.basis.kv1.breaks, patch.basis.kv2.breaks, edge)
    pts, wts = segment_rule(breaks, order)
    t = pts.reshape(-1)
    xi = edge_points(edge, t)
    X, J = patch.evaluate(xi)
    ds = np.linalg.norm(J @ edge_tangent(edge), axis=1)
    return t, xi, X, J, wts.reshape(-1) * ds
