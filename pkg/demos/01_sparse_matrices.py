"""
Sparse matrices and the Matrix Market format
============================================

Build a test matrix, write it to Matrix Market text, read it back, and
normalize it so its spectrum sits inside the unit disk.
"""

import io

import numpy as np

from gnp.generators import convection_diffusion_2d
from gnp.sparse import gershgorin_gamma, normalize, parse_matrix_market, spmm, spmv, write_matrix_market

# a 2-D convection-diffusion operator on a 16 x 16 interior grid (n = 256)
A = convection_diffusion_2d(16, convection=(20.0, 10.0))
print(f"n = {A.n}, nnz = {A.nnz}")

# Matrix Market round trip through an in-memory buffer
buf = io.StringIO()
write_matrix_market(A, buf, comment="demo matrix")
B = parse_matrix_market(buf.getvalue())
print("round trip exact:", np.array_equal(A.values, B.values))

# the Gershgorin bound: min of the largest row and column absolute sums
gamma = gershgorin_gamma(A)
Ahat = normalize(A)
print(f"gamma(A) = {gamma:.3f}, gamma(Ahat) = {gershgorin_gamma(Ahat):.3f}")

# a block product gives the same columns as repeated matrix-vector products
X = np.random.default_rng(0).standard_normal((A.n, 4))
Y = spmm(Ahat, X)
print("spmm columns equal spmv:", all(np.array_equal(Y[:, k], spmv(Ahat, X[:, k])) for k in range(4)))
