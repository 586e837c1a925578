"""Univariate and tensor-product B-spline bases.

Evaluation follows the usual span-local scheme: for a parameter value the
``p+1`` nonzero basis functions on the containing knot span are computed
together with their derivatives.  All routines accept arrays of points and
are vectorized over them; scalar wrappers are provided for convenience.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

_KNOT_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Open knot vector on ``[0, 1]`` together with a spline degree.

    Args:
        knots: non-decreasing knot values; first and last values must be
            repeated exactly ``degree + 1`` times.
        degree: polynomial degree ``p >= 1``.
    """

    knots: np.ndarray
    degree: int

    def __post_init__(self):
        kv = np.array(self.knots, dtype=float)
        p = int(self.degree)
        if p < 1:
            raise DomainError(f"degree must be >= 1, got {p}")
        if kv.ndim != 1 or kv.size < 2 * (p + 1):
            raise DomainError("knot vector too short for degree %d" % p)
        if np.any(np.diff(kv) < 0):
            raise DomainError("knots must be non-decreasing")
        if kv[0] != 0.0 or kv[-1] != 1.0:
            raise DomainError("knot vector must start at 0 and end at 1")
        if np.count_nonzero(kv == 0.0) != p + 1 or np.count_nonzero(kv == 1.0) != p + 1:
            raise DomainError("end knots must have multiplicity exactly p+1")
        _, mult = np.unique(kv, return_counts=True)
        if np.any(mult > p + 1):
            raise DomainError("knot multiplicity exceeds p+1")
        kv.setflags(write=False)
        object.__setattr__(self, "knots", kv)
        object.__setattr__(self, "degree", p)

    @property
    def n(self) -> int:
        """Number of basis functions."""
        return self.knots.size - self.degree - 1

    @property
    def breaks(self) -> np.ndarray:
        """Distinct knot values (the mesh in this direction)."""
        return np.unique(self.knots)

    @property
    def multiplicities(self) -> np.ndarray:
        return np.unique(self.knots, return_counts=True)[1]

    @property
    def num_spans(self) -> int:
        return self.breaks.size - 1

    def span_indices(self) -> np.ndarray:
        """Knot indices ``s`` of the non-empty spans ``[knots[s], knots[s+1])``."""
        kv = self.knots
        s = np.arange(self.degree, self.n)
        return s[kv[s + 1] > kv[s]]

    def __repr__(self):
        return "KnotVector(%s, degree=%d)" % (np.array2string(self.knots, separator=", "), self.degree)

    def __eq__(self, other):
        if not isinstance(other, KnotVector):
            return NotImplemented
        return self.degree == other.degree and np.array_equal(self.knots, other.knots)

    def __hash__(self):
        return hash((self.degree, self.knots.tobytes()))


def open_knot_vector(breaks, degree: int, multiplicities=None) -> KnotVector:
    """Build an open knot vector from distinct break values.

    Interior breaks get multiplicity 1 unless ``multiplicities`` (one entry
    per interior break) says otherwise.
    """
    breaks = np.asarray(breaks, dtype=float)
    interior = breaks[1:-1]
    if multiplicities is None:
        multiplicities = np.ones(interior.size, dtype=int)
    knots = np.concatenate([
        np.full(degree + 1, breaks[0]),
        np.repeat(interior, multiplicities),
        np.full(degree + 1, breaks[-1]),
    ])
    return KnotVector(knots, degree)


def _check_points(x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise DomainError("parameter values must lie in [0, 1]")
    return x


def find_spans(kv: KnotVector, x) -> np.ndarray:
    """Vectorized span lookup with the half-open convention.

    Returns ``s`` with ``knots[s] <= x < knots[s+1]``; ``x == 1`` maps to the
    last non-empty span.
    """
    x = _check_points(x)
    s = np.searchsorted(kv.knots, x, side="right") - 1
    return np.clip(s, kv.degree, kv.n - 1)


def find_span(kv: KnotVector, x: float) -> int:
    return int(find_spans(kv, x)[0])


def basis_derivs(kv: KnotVector, x, nd: int = 0, spans=None):
    """Nonzero basis functions and derivatives at many points.

    Args:
        kv: knot vector.
        x: array of ``m`` parameter values.
        nd: highest derivative order (``0 <= nd <= p``).
        spans: optional precomputed spans for ``x``.

    Returns:
        ``(spans, ders)`` where ``ders[k, :, j]`` is the ``j``-th derivative
        of basis function ``spans[k] - p + j`` at ``x[k]``; shape
        ``(m, nd + 1, p + 1)``.
    """
    p = kv.degree
    if nd < 0 or nd > p:
        raise DomainError(f"derivative order must be in [0, {p}], got {nd}")
    x = _check_points(x)
    if spans is None:
        spans = find_spans(kv, x)
    U = kv.knots
    m = x.size

    ndu = np.zeros((m, p + 1, p + 1))
    ndu[:, 0, 0] = 1.0
    left = np.zeros((m, p + 1))
    right = np.zeros((m, p + 1))
    for j in range(1, p + 1):
        left[:, j] = x - U[spans + 1 - j]
        right[:, j] = U[spans + j] - x
        saved = np.zeros(m)
        for r in range(j):
            ndu[:, j, r] = right[:, r + 1] + left[:, j - r]
            temp = ndu[:, r, j - 1] / ndu[:, j, r]
            ndu[:, r, j] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        ndu[:, j, j] = saved

    ders = np.zeros((m, nd + 1, p + 1))
    ders[:, 0, :] = ndu[:, :, p]
    if nd == 0:
        return spans, ders

    a = np.zeros((m, 2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[:] = 0.0
        a[:, 0, 0] = 1.0
        for k in range(1, nd + 1):
            d = np.zeros(m)
            rk, pk = r - k, p - k
            if r >= k:
                a[:, s2, 0] = a[:, s1, 0] / ndu[:, pk + 1, rk]
                d += a[:, s2, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[:, s2, j] = (a[:, s1, j] - a[:, s1, j - 1]) / ndu[:, pk + 1, rk + j]
                d += a[:, s2, j] * ndu[:, rk + j, pk]
            if r <= pk:
                a[:, s2, k] = -a[:, s1, k - 1] / ndu[:, pk + 1, r]
                d += a[:, s2, k] * ndu[:, r, pk]
            ders[:, k, r] = d
            s1, s2 = s2, s1

    fac = p
    for k in range(1, nd + 1):
        ders[:, k, :] *= fac
        fac *= p - k
    return spans, ders


def eval_basis(kv: KnotVector, x: float) -> np.ndarray:
    """The ``p+1`` nonzero basis values at a single point."""
    return basis_derivs(kv, x, 0)[1][0, 0]


def eval_basis_derivs(kv: KnotVector, x: float, max_order: int) -> np.ndarray:
    """Rows ``0..max_order`` of values and derivatives at a single point."""
    return basis_derivs(kv, x, max_order)[1][0]


def collocation_matrix(kv: KnotVector, x, nd: int = 0):
    """Dense matrices ``M[k]`` with ``M[k][q, i] = d^k B_i(x_q)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    spans, ders = basis_derivs(kv, x, nd)
    out = np.zeros((nd + 1, x.size, kv.n))
    cols = spans[:, None] - kv.degree + np.arange(kv.degree + 1)
    rows = np.arange(x.size)[:, None]
    for k in range(nd + 1):
        out[k, rows, cols] = ders[:, k, :]
    return out


# --- refinement ------------------------------------------------------------

def refine_dyadic(kv: KnotVector, levels: int) -> KnotVector:
    """Insert midpoints of all non-empty spans, ``levels`` times."""
    if levels < 0:
        raise DomainError("levels must be >= 0")
    for _ in range(levels):
        b = kv.breaks
        kv = KnotVector(np.sort(np.concatenate([kv.knots, 0.5 * (b[:-1] + b[1:])])), kv.degree)
    return kv


def insert_knot(kv: KnotVector, ctrl: np.ndarray, u: float):
    """Boehm insertion of a single knot.

    ``ctrl`` has shape ``(n, ...)``; the first axis runs over basis functions.
    For rational curves pass homogeneous coordinates.
    """
    p = kv.degree
    U = kv.knots
    k = find_span(kv, u)
    ctrl = np.asarray(ctrl, dtype=float)
    new = np.empty((ctrl.shape[0] + 1,) + ctrl.shape[1:])
    new[: k - p + 1] = ctrl[: k - p + 1]
    new[k + 1:] = ctrl[k:]
    for i in range(k - p + 1, k + 1):
        a = (u - U[i]) / (U[i + p] - U[i])
        new[i] = a * ctrl[i] + (1.0 - a) * ctrl[i - 1]
    return KnotVector(np.insert(U, k + 1, u), p), new


def insert_knots(kv: KnotVector, ctrl: np.ndarray, values, axis: int = 0):
    """Insert several knots into the control net along ``axis``."""
    ctrl = np.moveaxis(np.asarray(ctrl, dtype=float), axis, 0)
    for u in np.sort(np.atleast_1d(values)):
        kv, ctrl = insert_knot(kv, ctrl, float(u))
    return kv, np.moveaxis(ctrl, 0, axis)


def dyadic_midpoints(kv: KnotVector, levels: int) -> np.ndarray:
    """Knots that :func:`refine_dyadic` adds, for use with :func:`insert_knots`."""
    fine = refine_dyadic(kv, levels)
    extra = list(fine.knots)
    for t in kv.knots:
        extra.remove(t)
    return np.array(extra)


# --- tensor products ---------------------------------------------------------

@dataclass(frozen=True)
class TensorBasis:
    """Tensor product of two univariate bases.

    Basis function ``(i1, i2)`` has flat index ``i1 * n2 + i2``.
    """

    kv1: KnotVector
    kv2: KnotVector

    @property
    def shape(self) -> tuple[int, int]:
        return (self.kv1.n, self.kv2.n)

    @property
    def size(self) -> int:
        return self.kv1.n * self.kv2.n

    @property
    def degrees(self) -> tuple[int, int]:
        return (self.kv1.degree, self.kv2.degree)

    @property
    def num_local(self) -> int:
        return (self.kv1.degree + 1) * (self.kv2.degree + 1)

    def refine(self, levels1: int, levels2: int | None = None) -> "TensorBasis":
        if levels2 is None:
            levels2 = levels1
        return TensorBasis(refine_dyadic(self.kv1, levels1), refine_dyadic(self.kv2, levels2))


def tensor_eval_many(tb: TensorBasis, xi, nd: int = 1):
    """Nonzero bivariate basis functions at ``m`` points.

    Returns:
        ``(idx, vals, grads)`` with shapes ``(m, L)``, ``(m, L)`` and
        ``(m, L, 2)``, ``L = (p1+1)(p2+1)``.  ``grads`` is ``None`` for
        ``nd == 0``.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    p1, p2 = tb.degrees
    s1, d1 = basis_derivs(tb.kv1, xi[:, 0], nd)
    s2, d2 = basis_derivs(tb.kv2, xi[:, 1], nd)
    m = xi.shape[0]
    L = (p1 + 1) * (p2 + 1)
    i1 = s1[:, None] - p1 + np.arange(p1 + 1)
    i2 = s2[:, None] - p2 + np.arange(p2 + 1)
    idx = (i1[:, :, None] * tb.kv2.n + i2[:, None, :]).reshape(m, L)
    vals = (d1[:, 0, :, None] * d2[:, 0, None, :]).reshape(m, L)
    if nd == 0:
        return idx, vals, None
    grads = np.empty((m, L, 2))
    grads[:, :, 0] = (d1[:, 1, :, None] * d2[:, 0, None, :]).reshape(m, L)
    grads[:, :, 1] = (d1[:, 0, :, None] * d2[:, 1, None, :]).reshape(m, L)
    return idx, vals, grads


def tensor_eval(tb: TensorBasis, xi):
    """Single-point version of :func:`tensor_eval_many`."""
    idx, vals, grads = tensor_eval_many(tb, np.asarray(xi, dtype=float)[None, :], 1)
    return idx[0], vals[0], grads[0]
