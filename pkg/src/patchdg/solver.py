"""Sparse symmetric linear algebra: PCG, dense Cholesky oracle, eigenvalue probe."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DefinitenessError, DomainError, SolverError

log = logging.getLogger(__name__)

DENSE_LIMIT = 2000


def as_sparse_sym(A, tol: float = 1e-12) -> sp.csr_matrix:
    """Validate ``A`` as a square CSR matrix, symmetric within ``tol`` (absolute)."""
    A = sp.csr_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise DomainError("matrix must be square")
    A.sum_duplicates()
    A.sort_indices()
    asym = symmetry_defect(A)
    if asym > tol:
        raise DomainError(f"matrix not symmetric (defect {asym:.3e})")
    return A


def symmetry_defect(A) -> float:
    """``max |A_rs - A_sr|``."""
    D = sp.csr_matrix(A - A.T)
    return float(np.max(np.abs(D.data))) if D.nnz else 0.0


@dataclass
class SolveReport:
    iterations: int
    relative_residual: float
    converged: bool


def pcg(A, b, precond: str = "jacobi", tol: float = 1e-6, max_iter: int | None = None, x0=None):
    """Preconditioned conjugate gradients.

    Stops once ``||b - A x|| <= tol * ||b||`` (relative reduction of the
    initial residual for the default zero initial guess).  Non-convergence
    within ``max_iter`` (default ``10 * n``) is reported, not raised.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = b.size
    if max_iter is None:
        max_iter = 10 * n
    if precond == "jacobi":
        d = A.diagonal()
        if np.any(d <= 0):
            raise DefinitenessError("non-positive diagonal entry; Jacobi preconditioner undefined")
        minv = 1.0 / d
    elif precond == "none":
        minv = None
    else:
        raise DomainError(f"unknown preconditioner {precond!r}")

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x if x0 is not None else b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True)
    rel = np.linalg.norm(r) / bnorm
    if rel <= tol:
        return x, SolveReport(0, rel, True)
    z = r * minv if minv is not None else r
    pdir = z.copy()
    rz = r @ z
    it = 0
    while it < max_iter:
        q = A @ pdir
        pq = pdir @ q
        if not np.isfinite(pq):
            raise SolverError("non-finite value in conjugate gradient iteration")
        if pq <= 0.0:
            raise DefinitenessError("matrix is not positive definite (p^T A p <= 0)")
        step = rz / pq
        x += step * pdir
        r -= step * q
        it += 1
        rel = np.linalg.norm(r) / bnorm
        if not np.isfinite(rel):
            raise SolverError("non-finite residual in conjugate gradient iteration")
        if rel <= tol:
            return x, SolveReport(it, rel, True)
        z = r * minv if minv is not None else r
        rz_new = r @ z
        pdir = z + (rz_new / rz) * pdir
        rz = rz_new
    log.warning("PCG did not converge in %d iterations (residual %.3e)", max_iter, rel)
    return x, SolveReport(it, rel, False)


def dense_cholesky(A, b) -> np.ndarray:
    """Solve with a dense Cholesky factorization; raises :class:`DefinitenessError` if ``A`` is not PD."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    try:
        c = scipy.linalg.cho_factor(A, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise DefinitenessError(f"Cholesky factorization failed: {exc}") from exc
    return scipy.linalg.cho_solve(c, np.asarray(b, dtype=float))


def min_eigen_estimate(A, tol: float = 1e-10, max_iter: int = 500) -> float:
    """Smallest eigenvalue of a small symmetric matrix.

    Inverse iteration on a dense copy when ``A`` is positive definite; for
    indefinite matrices the lowest eigenvalue is returned directly.
    """
    n = A.shape[0]
    if n > DENSE_LIMIT:
        raise DomainError(f"eigenvalue probe limited to {DENSE_LIMIT} unknowns, got {n}")
    M = A.toarray() if sp.issparse(A) else np.array(A, dtype=float)
    try:
        c = scipy.linalg.cho_factor(M, lower=True)
    except np.linalg.LinAlgError:
        return float(scipy.linalg.eigh(M, eigvals_only=True, subset_by_index=[0, 0])[0])
    rng = np.random.default_rng(0)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = v @ M @ v
    for _ in range(max_iter):
        w = scipy.linalg.cho_solve(c, v)
        v = w / np.linalg.norm(w)
        lam_new = v @ M @ v
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return float(lam_new)
        lam = lam_new
    return float(lam)


def direct_solve(A, b) -> np.ndarray:
    """Sparse LU solve (reference path for large instances)."""
    return spla.spsolve(sp.csc_matrix(A), b)


def dump_matrix_market(A, path) -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), symmetry="general")
