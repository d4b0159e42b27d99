"""Reference preconditioners: none, Jacobi, inner GMRES and ILU(0)."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import spsolve_triangular

from .krylov import IdentityOperator, _GivensQR, _arnoldi_step
from .sparse import CsrMatrix

__all__ = [
    "ConstructionError",
    "JacobiPreconditioner",
    "InnerGmresPreconditioner",
    "Ilu0Factors",
    "Ilu0Preconditioner",
    "identity_build",
    "jacobi_build",
    "inner_gmres_build",
    "ilu0_factor",
    "ilu0_build",
    "PRECONDITIONERS",
]

PRECONDITIONERS = ("none", "jacobi", "gmres", "ilu0", "gnp")


class ConstructionError(RuntimeError):
    """A preconditioner could not be built for the given matrix."""


def identity_build(A: CsrMatrix | None = None) -> IdentityOperator:
    return IdentityOperator()


class JacobiPreconditioner:
    name = "jacobi"

    def __init__(self, inv_diag: np.ndarray):
        self.inv_diag = inv_diag

    def apply(self, v):
        return self.inv_diag * np.asarray(v, dtype=np.float64)


def jacobi_build(A: CsrMatrix) -> JacobiPreconditioner:
    """``diag(A)^-1``; diagonal entries below 1e-300 in magnitude are replaced by 1."""
    d = A.diagonal().astype(np.float64)
    d[np.abs(d) < 1e-300] = 1.0
    return JacobiPreconditioner(1.0 / d)


class InnerGmresPreconditioner:
    """``z = GMRES_k(A, v)`` from a zero initial guess, unrestarted.

    The number of inner steps depends on ``v`` through the stopping test, so
    this operator is nonlinear and only valid inside FGMRES.
    """

    name = "gmres"

    def __init__(self, A: CsrMatrix, inner_iters: int = 10, inner_tol: float = 1e-6):
        if inner_iters < 1:
            raise ValueError("inner_iters must be >= 1")
        self.A = A
        self.inner_iters = inner_iters
        self.inner_tol = inner_tol

    def apply(self, v):
        v = np.asarray(v, dtype=np.float64)
        beta = np.linalg.norm(v)
        if beta == 0.0:
            return np.zeros_like(v)
        n, m = self.A.n, self.inner_iters
        V = np.zeros((n, m + 1), order="F")
        H = np.zeros((m + 1, m))
        Z = np.zeros((n, m), order="F")
        V[:, 0] = v / beta
        qr = _GivensQR(m, beta)
        for j in range(m):
            broke = _arnoldi_step(self.A, V, H, Z, j, None)
            res = qr.add_column(H[: j + 2, j])
            if broke or res <= self.inner_tol * beta:
                break
        k = qr.k
        # back off singular trailing columns and return the best available iterate
        while k > 0:
            R = qr.R[:k, :k]
            if np.all(np.diag(R) != 0.0):
                break
            k -= 1
        if k == 0:
            return np.zeros_like(v)
        g = qr.g[:k]
        y = np.zeros(k)
        R = qr.R[:k, :k]
        for i in range(k - 1, -1, -1):
            y[i] = (g[i] - R[i, i + 1 : k] @ y[i + 1 :]) / R[i, i]
        return V[:, :k] @ y


def inner_gmres_build(A: CsrMatrix, inner_iters: int = 10, inner_tol: float = 1e-6) -> InnerGmresPreconditioner:
    return InnerGmresPreconditioner(A, inner_iters, inner_tol)


class Ilu0Factors:
    """ILU(0) factors in the pattern of ``A``: unit lower ``L`` and upper ``U``."""

    def __init__(self, n: int, row_ptr, col_idx, lu_values):
        self.n = n
        self.row_ptr = row_ptr
        self.col_idx = col_idx
        self.values = lu_values
        rows = np.repeat(np.arange(n), np.diff(row_ptr))
        lower = col_idx < rows
        upper = ~lower
        LU = sps.csr_matrix((lu_values, col_idx, row_ptr), shape=(n, n))
        self.L = sps.csr_matrix((lu_values[lower], (rows[lower], col_idx[lower])), shape=(n, n)) + sps.identity(n, format="csr")
        self.U = sps.csr_matrix((lu_values[upper], (rows[upper], col_idx[upper])), shape=(n, n))
        self.L.sort_indices()
        self.U.sort_indices()
        self._LU = LU

    def solve(self, v):
        y = spsolve_triangular(self.L, v, lower=True, unit_diagonal=True)
        return spsolve_triangular(self.U, y, lower=False)


def ilu0_factor(A: CsrMatrix) -> Ilu0Factors:
    """Incomplete LU with zero fill (IKJ variant).

    Raises :class:`ConstructionError` when a diagonal entry is structurally
    absent or a pivot becomes zero or non-finite.
    """
    n = A.n
    rp, ci = A.row_ptr, A.col_idx
    vals = A.values.copy()
    if not A.has_structural_diagonal().all():
        missing = int(np.flatnonzero(~A.has_structural_diagonal())[0])
        raise ConstructionError(f"ILU(0): structurally zero diagonal in row {missing}")
    diag_pos = np.empty(n, dtype=np.int64)
    for i in range(n):
        lo, hi = rp[i], rp[i + 1]
        diag_pos[i] = lo + np.searchsorted(ci[lo:hi], i)
    for i in range(n):
        lo, hi = rp[i], rp[i + 1]
        pos = {int(c): p for p, c in zip(range(lo, hi), ci[lo:hi])}
        for p in range(lo, diag_pos[i]):
            k = int(ci[p])
            piv = vals[diag_pos[k]]
            if piv == 0.0 or not np.isfinite(piv):
                raise ConstructionError(f"ILU(0): zero pivot in row {k}")
            vals[p] /= piv
            lik = vals[p]
            for q in range(diag_pos[k] + 1, rp[k + 1]):
                t = pos.get(int(ci[q]))
                if t is not None:
                    vals[t] -= lik * vals[q]
        piv = vals[diag_pos[i]]
        if piv == 0.0 or not np.isfinite(piv):
            raise ConstructionError(f"ILU(0): zero pivot in row {i}")
    return Ilu0Factors(n, rp, ci, vals)


class Ilu0Preconditioner:
    name = "ilu0"

    def __init__(self, factors: Ilu0Factors):
        self.factors = factors

    def apply(self, v):
        return self.factors.solve(np.asarray(v, dtype=np.float64))


def ilu0_build(f: Ilu0Factors | CsrMatrix) -> Ilu0Preconditioner:
    if isinstance(f, CsrMatrix):
        f = ilu0_factor(f)
    return Ilu0Preconditioner(f)
