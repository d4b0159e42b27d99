"""Synthetic test matrices."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sps

from .sparse import CsrMatrix

__all__ = ["convection_diffusion_2d", "random_perturbed_diagonal", "random_sparse"]


def convection_diffusion_2d(grid: int, convection=(20.0, 10.0), scaled: bool = True) -> CsrMatrix:
    """Five-point central-difference ``-lap u + c . grad u`` on the unit square.

    Dirichlet boundaries, ``grid x grid`` interior nodes (``n = grid**2``),
    lexicographic ordering with x fastest. With ``scaled`` the stencil is
    multiplied by ``h**2`` so the diagonal is 4.
    """
    if grid < 1:
        raise ValueError("grid must be >= 1")
    cx, cy = convection
    h = 1.0 / (grid + 1)
    one = np.ones(grid)
    # 1-D second difference and central first difference
    D2 = sps.diags([-one[1:], 2 * one, -one[1:]], [-1, 0, 1])
    D1 = sps.diags([-one[1:], one[1:]], [-1, 1]) * (h / 2.0)
    I = sps.identity(grid)
    A = sps.kron(I, D2 + cx * D1) + sps.kron(D2 + cy * D1, I)
    if not scaled:
        A = A / h**2
    return CsrMatrix.from_scipy(A)


def random_perturbed_diagonal(n: int, nnz_per_row: int = 4, perturbation: float = 1.0,
                              diag_range=(1.0, 2.0), seed=0) -> CsrMatrix:
    """Random nonsymmetric matrix ``diag(d) + perturbation * R``.

    ``d`` is uniform on ``diag_range`` and ``R``
    has ``nnz_per_row`` standard-normal off-diagonal entries per row divided by
    ``nnz_per_row`` so that ``perturbation < 1`` keeps rows diagonally dominant
    in expectation.
    """
    rng = np.random.default_rng(seed)
    d = rng.uniform(*diag_range, size=n)
    rows = np.repeat(np.arange(n), nnz_per_row)
    cols = rng.integers(0, n - 1, size=rows.size) if n > 1 else np.zeros(0, dtype=int)
    cols = cols + (cols >= rows)  # skip the diagonal
    vals = perturbation * rng.standard_normal(rows.size) / max(nnz_per_row, 1)
    R = sps.coo_matrix((vals, (rows, cols)), shape=(n, n))
    return CsrMatrix.from_scipy(sps.diags(d) + R)


def random_sparse(n: int, density: float = 0.1, seed=0, diag_shift: float = 0.0) -> CsrMatrix:
    """Random sparse matrix with standard-normal entries plus ``diag_shift * I``."""
    rng = np.random.default_rng(seed)
    R = sps.random(n, n, density=density, random_state=rng, data_rvs=rng.standard_normal, format="csr")
    return CsrMatrix.from_scipy(R + diag_shift * sps.identity(n))
