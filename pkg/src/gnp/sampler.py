"""Streaming ``(b, x)`` training pairs for the neural preconditioner.

Two sources are mixed in each batch:

* spectral pairs, ``x = V Zs diag(1/S) eps`` with ``Hbar = W diag(S) Zs^T``
  from ``m`` unpreconditioned Arnoldi steps, so ``b = A x = V_{m+1} W eps``
  has a projector covariance concentrated near the bottom eigen-subspace;
* isotropic pairs, ``x ~ N(0, I)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .krylov import arnoldi_cycle
from .sparse import CsrMatrix, spmm, spmv

__all__ = [
    "jacobi_svd",
    "SpectralSampler",
    "TrainingBatch",
    "build_spectral_sampler",
    "sample_spectral_pair",
    "sample_gaussian_pair",
    "assemble_batch",
]

SV_FLOOR = 1e-12


def jacobi_svd(a, tol: float = 1e-15, max_sweeps: int = 60):
    """Thin SVD of a tall matrix by one-sided (Hestenes) Jacobi rotations.

    Returns ``(U, s, V)`` with ``a = U diag(s) V^T``, ``s`` descending.
    Columns of ``U`` belonging to zero singular values are left at zero.
    """
    a = np.array(a, dtype=np.float64)
    p, q = a.shape
    if p < q:
        raise ValueError("jacobi_svd expects rows >= cols")
    U = a.copy()
    V = np.eye(q)
    for _ in range(max_sweeps):
        rotated = False
        for i in range(q - 1):
            for j in range(i + 1, q):
                ui, uj = U[:, i], U[:, j]
                alpha = ui @ ui
                beta = uj @ uj
                gamma = ui @ uj
                if gamma == 0.0 or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                U[:, [i, j]] = np.column_stack([c * ui - s * uj, s * ui + c * uj])
                vi, vj = V[:, i].copy(), V[:, j].copy()
                V[:, i] = c * vi - s * vj
                V[:, j] = s * vi + c * vj
        if not rotated:
            break
    sv = np.linalg.norm(U, axis=0)
    order = np.argsort(-sv, kind="stable")
    sv, U, V = sv[order], U[:, order], V[:, order]
    nz = sv > 0
    U[:, nz] /= sv[nz]
    U[:, ~nz] = 0.0
    return U, sv, V


@dataclass(frozen=True)
class SpectralSampler:
    """Cached Arnoldi/SVD factors for spectral sampling.

    ``V`` (n x k) and ``Vfull`` (n x (k+1)) are the Arnoldi basis; ``Wm``,
    ``S`` and ``Zm_sv`` are the truncated SVD of the (k+1) x k Hessenberg.
    """

    V: np.ndarray
    Vfull: np.ndarray
    Hbar: np.ndarray
    Wm: np.ndarray
    Zm_sv: np.ndarray
    S: np.ndarray
    breakdown: bool

    @property
    def m_eff(self) -> int:
        return self.S.shape[0]

    def b_covariance(self) -> np.ndarray:
        """Dense covariance of spectral ``b`` (a projector). Small n only."""
        B = self.Vfull @ self.Wm
        return B @ B.T


@dataclass
class TrainingBatch:
    B: np.ndarray
    X: np.ndarray


def build_spectral_sampler(A: CsrMatrix, m: int = 40, rng_seed=0) -> SpectralSampler:
    if A.n < 2:
        raise ValueError("spectral sampling needs n >= 2")
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(rng_seed)
    r0 = rng.standard_normal(A.n)
    fact, _ = arnoldi_cycle(A, r0, m)
    k = fact.k
    W, S, Zs = jacobi_svd(fact.Hbar)
    keep = S >= S[0] * SV_FLOOR if S[0] > 0 else np.zeros_like(S, dtype=bool)
    if not keep.any():
        raise ValueError("Arnoldi Hessenberg is zero; matrix is zero on the start vector")
    return SpectralSampler(
        V=fact.V[:, :k].copy(),
        Vfull=fact.V.copy(),
        Hbar=fact.Hbar.copy(),
        Wm=W[:, keep].copy(),
        Zm_sv=Zs[:, keep].copy(),
        S=S[keep].copy(),
        breakdown=fact.breakdown,
    )


def _spectral_x(s: SpectralSampler, eps: np.ndarray) -> np.ndarray:
    return s.V @ (s.Zm_sv @ (eps / s.S[:, None] if eps.ndim == 2 else eps / s.S))


def sample_spectral_pair(s: SpectralSampler, A: CsrMatrix, rng, eps=None):
    """One ``(x, b)`` pair with ``x`` in the Arnoldi subspace."""
    if eps is None:
        eps = rng.standard_normal(s.m_eff)
    eps = np.asarray(eps, dtype=np.float64)
    x = _spectral_x(s, eps)
    return x, spmv(A, x)


def sample_gaussian_pair(A: CsrMatrix, rng):
    x = rng.standard_normal(A.n)
    return x, spmv(A, x)


def assemble_batch(s: SpectralSampler, A: CsrMatrix, batch: int, spectral_count: int, rng) -> TrainingBatch:
    """``spectral_count`` spectral columns followed by Gaussian ones."""
    if batch <= 0:
        raise ValueError("batch must be positive")
    if not 0 <= spectral_count <= batch:
        raise ValueError("need 0 <= spectral_count <= batch")
    X = np.empty((A.n, batch))
    for k in range(spectral_count):
        X[:, k] = _spectral_x(s, rng.standard_normal(s.m_eff))
    for k in range(spectral_count, batch):
        X[:, k] = rng.standard_normal(A.n)
    B = spmm(A, X)
    return TrainingBatch(B=B, X=X)
