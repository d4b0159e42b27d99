"""
Spectral sampling of training pairs
===================================

Training targets ``x = V Z S^{-1} eps`` come from an Arnoldi basis and the
SVD of its Hessenberg matrix, so the right-hand sides ``b = A x`` lean
towards the directions that a Krylov solver resolves slowly.
"""

import numpy as np

from gnp.generators import convection_diffusion_2d
from gnp.sampler import assemble_batch, build_spectral_sampler, sample_spectral_pair
from gnp.sparse import normalize

A = normalize(convection_diffusion_2d(16))
s = build_spectral_sampler(A, m=40, rng_seed=0)
print(f"Arnoldi steps kept: {s.m_eff}; singular values {s.S[0]:.3f} .. {s.S[-1]:.2e}")

# the covariance of b is an orthogonal projector
P = s.b_covariance()
print(f"||P^2 - P|| = {np.linalg.norm(P @ P - P):.1e}, trace = {np.trace(P):.1f}")

# small singular values get amplified in x
rng = np.random.default_rng(1)
x, b = sample_spectral_pair(s, A, rng)
print(f"||x|| = {np.linalg.norm(x):.2f}, ||b|| = {np.linalg.norm(b):.2f}")

# a training batch mixes spectral and plain Gaussian pairs
batch = assemble_batch(s, A, batch=16, spectral_count=8, rng=rng)
print("batch shapes:", batch.X.shape, batch.B.shape)
