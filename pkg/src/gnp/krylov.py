"""Arnoldi process, restarted GMRES and flexible GMRES.

FGMRES keeps the preconditioned vectors ``z_j = M(v_j)`` explicitly, so the
preconditioner may be any deterministic map R^n -> R^n, linear or not. The
approximate solution of a cycle is ``x0 + Z y`` where ``y`` solves the small
Hessenberg least-squares problem.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, runtime_checkable

import numpy as np

from .sparse import CsrMatrix, spmv

__all__ = [
    "FlexibleOperator",
    "LinearOperator",
    "IdentityOperator",
    "ArnoldiFactorization",
    "SolveConfig",
    "ConvergenceHistory",
    "SolveOutcome",
    "SingularHessenbergError",
    "arnoldi_cycle",
    "hessenberg_lstsq",
    "fgmres_solve",
    "gmres_solve",
    "residual_projection_check",
]

BREAKDOWN_TOL = 1e-14
REORTH_RATIO = 1.0 / math.sqrt(2.0)

CONVERGED = "converged"
MAXITERS = "maxiters"
TIMEOUT = "timeout"
SOLUTION_FAILURE = "solution_failure"
BREAKDOWN_EXACT = "breakdown_exact"


@runtime_checkable
class FlexibleOperator(Protocol):
    """Anything with a ``name`` and a deterministic ``apply(v) -> z``."""

    name: str

    def apply(self, v: np.ndarray) -> np.ndarray: ...


class LinearOperator:
    """Wrap a fixed matrix (dense array or :class:`CsrMatrix`) or a callable."""

    def __init__(self, op, name: str = "linear"):
        self.name = name
        if callable(op) and not isinstance(op, (np.ndarray, CsrMatrix)):
            self._fn = op
        else:
            self._fn = lambda v, _m=op: _m @ v

    def apply(self, v):
        return np.asarray(self._fn(v), dtype=np.float64)


class IdentityOperator:
    name = "none"

    def apply(self, v):
        return np.array(v, dtype=np.float64, copy=True)


@dataclass
class ArnoldiFactorization:
    """``A Z = V Hbar`` after ``k`` steps (``Z = V[:, :k]`` without preconditioner).

    ``V`` has ``k + 1`` columns. After a breakdown the last column is zero and
    ``Hbar[k, k-1]`` holds the (negligible) norm that triggered it.
    """

    V: np.ndarray
    Hbar: np.ndarray
    k: int
    breakdown: bool


@dataclass
class SolveConfig:
    rtol: float = 1e-8
    maxiters: Optional[int] = 100
    restart: int = 10
    timeout_secs: Optional[float] = None

    def __post_init__(self):
        if not self.rtol > 0:
            raise ValueError("rtol must be positive")
        if self.restart < 1:
            raise ValueError("restart must be >= 1")
        if self.maxiters is not None and self.maxiters < 0:
            raise ValueError("maxiters must be >= 0")
        if self.maxiters is None and self.timeout_secs is None:
            raise ValueError("need maxiters or timeout_secs to terminate")


@dataclass
class ConvergenceHistory:
    """Per-iteration ``(i, relres_i, t_i)`` triples; iteration 0 is the initial guess."""

    iterations: list = field(default_factory=list)
    relres: list = field(default_factory=list)
    times: list = field(default_factory=list)

    def append(self, i: int, r: float, t: float) -> None:
        if self.iterations and i <= self.iterations[-1]:
            raise ValueError("iteration indices must increase")
        if self.times and t < self.times[-1]:
            t = self.times[-1]
        self.iterations.append(int(i))
        self.relres.append(float(r))
        self.times.append(float(t))

    def __len__(self):
        return len(self.iterations)

    @property
    def entries(self) -> list[tuple[int, float, float]]:
        return list(zip(self.iterations, self.relres, self.times))

    @classmethod
    def from_entries(cls, entries) -> "ConvergenceHistory":
        h = cls()
        for i, r, t in entries:
            h.append(i, r, t)
        return h

    def __eq__(self, other):
        if not isinstance(other, ConvergenceHistory):
            return NotImplemented
        return self.entries == other.entries


@dataclass
class CycleData:
    """Quantities of the last FGMRES cycle, kept for diagnostics."""

    r0: np.ndarray
    Z: np.ndarray
    V: np.ndarray
    Hbar: np.ndarray


@dataclass
class SolveOutcome:
    x: np.ndarray
    history: ConvergenceHistory
    status: str
    iterations: int = 0
    last_cycle: Optional[CycleData] = None

    @property
    def final_relres(self) -> float:
        return self.history.relres[-1]


class SingularHessenbergError(ArithmeticError):
    """The triangular factor of the Hessenberg matrix is exactly singular."""


# -- Arnoldi ----------------------------------------------------------------


def _arnoldi_step(A, V, H, Z, j, M) -> bool:
    """Extend the basis by one vector. Returns True on breakdown."""
    z = V[:, j] if M is None else np.asarray(M.apply(V[:, j]), dtype=np.float64)
    if z.shape != (A.n,):
        raise ValueError(f"preconditioner {getattr(M, 'name', M)!r} returned shape {z.shape}")
    Z[:, j] = z
    w = spmv(A, z)
    wnorm0 = np.linalg.norm(w)
    for i in range(j + 1):
        h = V[:, i] @ w
        H[i, j] = h
        w -= h * V[:, i]
    wnorm = np.linalg.norm(w)
    if wnorm < REORTH_RATIO * wnorm0:
        for i in range(j + 1):
            h = V[:, i] @ w
            H[i, j] += h
            w -= h * V[:, i]
        wnorm = np.linalg.norm(w)
    H[j + 1, j] = wnorm
    if not np.isfinite(wnorm) or wnorm <= BREAKDOWN_TOL * wnorm0:
        V[:, j + 1] = 0.0
        return True
    V[:, j + 1] = w / wnorm
    return False


def arnoldi_cycle(A: CsrMatrix, r0, m: int, M: Optional[FlexibleOperator] = None):
    """Run up to ``m`` (flexible) Arnoldi steps from ``r0``.

    Returns ``(ArnoldiFactorization, Z)`` where ``Z`` has one column per
    completed step. Stops early on breakdown.
    """
    r0 = np.asarray(r0, dtype=np.float64)
    if r0.shape != (A.n,):
        raise ValueError("dimension mismatch")
    beta = np.linalg.norm(r0)
    if beta == 0:
        raise ValueError("r0 must be nonzero")
    if m < 1:
        raise ValueError("m must be >= 1")
    n = A.n
    V = np.zeros((n, m + 1), order="F")
    H = np.zeros((m + 1, m))
    Z = np.zeros((n, m), order="F")
    V[:, 0] = r0 / beta
    k, broke = 0, False
    for j in range(m):
        broke = _arnoldi_step(A, V, H, Z, j, M)
        k = j + 1
        if broke:
            break
    fact = ArnoldiFactorization(V=V[:, : k + 1].copy(), Hbar=H[: k + 1, :k].copy(), k=k, breakdown=broke)
    return fact, Z[:, :k].copy()


# -- small least squares ----------------------------------------------------


def _givens(a: float, b: float) -> tuple[float, float]:
    if b == 0.0:
        return 1.0, 0.0
    r = math.hypot(a, b)
    return a / r, b / r


class _GivensQR:
    """Incremental QR of an upper Hessenberg matrix, one column at a time."""

    def __init__(self, m: int, beta: float):
        self.R = np.zeros((m + 1, m))
        self.cs = np.zeros(m)
        self.sn = np.zeros(m)
        self.g = np.zeros(m + 1)
        self.g[0] = beta
        self.k = 0

    def add_column(self, h: np.ndarray) -> float:
        """Append Hessenberg column ``h`` (length k+2); return the new residual norm."""
        j = self.k
        col = np.array(h[: j + 2], dtype=np.float64)
        for i in range(j):
            c, s = self.cs[i], self.sn[i]
            a, b = col[i], col[i + 1]
            col[i] = c * a + s * b
            col[i + 1] = -s * a + c * b
        c, s = _givens(col[j], col[j + 1])
        self.cs[j], self.sn[j] = c, s
        col[j] = c * col[j] + s * col[j + 1]
        col[j + 1] = 0.0
        self.R[: j + 2, j] = col
        gj = self.g[j]
        self.g[j] = c * gj
        self.g[j + 1] = -s * gj
        self.k = j + 1
        return abs(self.g[j + 1])

    def solve(self) -> np.ndarray:
        k = self.k
        R = self.R[:k, :k]
        d = np.diag(R)
        if np.any(d == 0.0) or not np.all(np.isfinite(d)):
            raise SingularHessenbergError("upper triangular factor is singular")
        y = np.zeros(k)
        g = self.g
        for i in range(k - 1, -1, -1):
            y[i] = (g[i] - R[i, i + 1 : k] @ y[i + 1 :]) / R[i, i]
        return y


def hessenberg_lstsq(Hbar, beta: float) -> tuple[np.ndarray, float]:
    """Minimize ``||beta e1 - Hbar y||`` for ``(k+1) x k`` upper Hessenberg ``Hbar``.

    Returns ``(y, residual_norm)``. Raises :class:`SingularHessenbergError`
    when the triangular factor has a zero pivot.
    """
    Hbar = np.asarray(Hbar, dtype=np.float64)
    if Hbar.ndim != 2 or Hbar.shape[0] != Hbar.shape[1] + 1 or Hbar.shape[1] < 1:
        raise ValueError(f"expected (k+1) x k with k >= 1, got {Hbar.shape}")
    k = Hbar.shape[1]
    qr = _GivensQR(k, beta)
    res = abs(beta)
    for j in range(k):
        res = qr.add_column(Hbar[: j + 2, j])
    return qr.solve(), res


# -- solvers ----------------------------------------------------------------


def fgmres_solve(
    A: CsrMatrix,
    b,
    M: Optional[FlexibleOperator] = None,
    x0=None,
    cfg: Optional[SolveConfig] = None,
) -> SolveOutcome:
    """Restarted flexible GMRES with right preconditioner ``M``.

    One Arnoldi step counts as one iteration; ``cfg.maxiters`` caps the total
    across restarts. The relative residual recorded for an iteration is the
    one tracked by the Givens QR, except at the end of a cycle, where the
    true residual ``||b - A x|| / ||b||`` is recomputed and recorded.

    A cycle whose true residual exceeds the tracked one by more than a factor
    of 10 (and by more than 1e-10 in absolute relative terms) ends the solve
    with status ``solution_failure``.
    """
    cfg = cfg or SolveConfig()
    b = np.asarray(b, dtype=np.float64)
    n = A.n
    if b.shape != (n,):
        raise ValueError(f"dimension mismatch: b has shape {b.shape}, matrix is {n}x{n}")
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        raise ValueError("b must be nonzero")
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64, copy=True)
    if x.shape != (n,):
        raise ValueError("dimension mismatch in x0")

    maxiters = cfg.maxiters if cfg.maxiters is not None else math.inf
    deadline = cfg.timeout_secs
    m = cfg.restart
    tol_abs = cfg.rtol * bnorm

    hist = ConvergenceHistory()
    t_start = time.perf_counter()
    r = b - spmv(A, x)
    beta = np.linalg.norm(r)
    hist.append(0, beta / bnorm, 0.0)
    it = 0
    status = CONVERGED if beta <= tol_abs else None
    last = None

    V = np.zeros((n, m + 1), order="F")
    H = np.zeros((m + 1, m))
    Z = np.zeros((n, m), order="F")

    while status is None:
        if it >= maxiters:
            status = MAXITERS
            break
        if deadline is not None and time.perf_counter() - t_start >= deadline:
            status = TIMEOUT
            break
        V[:, 0] = r / beta
        H[:] = 0.0
        qr = _GivensQR(m, beta)
        k = 0
        broke = False
        stop = None
        for j in range(m):
            broke = _arnoldi_step(A, V, H, Z, j, M)
            tracked = qr.add_column(H[: j + 2, j])
            it += 1
            k = j + 1
            if broke or tracked <= tol_abs:
                break
            if it >= maxiters:
                stop = MAXITERS
                break
            if deadline is not None and time.perf_counter() - t_start >= deadline:
                stop = TIMEOUT
                break
            if j < m - 1:
                hist.append(it, tracked / bnorm, time.perf_counter() - t_start)

        Hk = H[: k + 1, :k]
        try:
            y, tracked = hessenberg_lstsq(Hk, beta)
        except SingularHessenbergError:
            hist.append(it, hist.relres[-1], time.perf_counter() - t_start)
            status = SOLUTION_FAILURE
            break
        x = x + Z[:, :k] @ y
        r_new = b - spmv(A, x)
        beta_new = np.linalg.norm(r_new)
        hist.append(it, beta_new / bnorm, time.perf_counter() - t_start)
        last = CycleData(r0=r, Z=Z[:, :k].copy(), V=V[:, : k + 1].copy(), Hbar=Hk.copy())
        r, beta = r_new, beta_new

        true_rel, tracked_rel = beta / bnorm, tracked / bnorm
        if not np.isfinite(beta) or (true_rel > 10.0 * tracked_rel and true_rel - tracked_rel > 1e-10):
            status = SOLUTION_FAILURE
        elif beta <= tol_abs:
            status = CONVERGED
        elif broke:
            status = BREAKDOWN_EXACT
        elif stop is not None:
            status = stop

    return SolveOutcome(x=x, history=hist, status=status, iterations=it, last_cycle=last)


def gmres_solve(A: CsrMatrix, b, cfg: Optional[SolveConfig] = None, x0=None) -> SolveOutcome:
    """Unpreconditioned restarted GMRES (FGMRES with ``z_j = v_j``)."""
    return fgmres_solve(A, b, None, x0, cfg)


def residual_projection_check(A: CsrMatrix, Z, r0, r_m) -> float:
    """``||r_m - (r0 - Q Q^T r0)||`` with ``Q`` the thin orthonormal factor of ``A Z``.

    For an unrestarted FGMRES cycle the residual is exactly the projection of
    ``r0`` off ``range(A Z)``, so this should vanish up to rounding. Returns
    ``inf`` (with a warning) if ``A Z`` is numerically rank deficient.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[:, None]
    AZ = np.column_stack([spmv(A, Z[:, j]) for j in range(Z.shape[1])])
    Q = np.zeros_like(AZ)
    for j in range(AZ.shape[1]):
        w = AZ[:, j].copy()
        w0 = np.linalg.norm(w)
        for _ in range(2):
            for i in range(j):
                w -= (Q[:, i] @ w) * Q[:, i]
        nw = np.linalg.norm(w)
        if w0 == 0 or nw <= 1e-12 * w0:
            warnings.warn("A Z is rank deficient; projection check undefined", RuntimeWarning, stacklevel=2)
            return math.inf
        Q[:, j] = w / nw
    r0 = np.asarray(r0, dtype=np.float64)
    proj = r0 - Q @ (Q.T @ r0)
    return float(np.linalg.norm(np.asarray(r_m, dtype=np.float64) - proj))
