import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnp.generators import random_sparse
from gnp.gnn import GnnDims, GnnParams, apply_preconditioner, gnn_backward, gnn_forward, init_params
from gnp.sparse import CsrMatrix, normalize


def relu(t):
    return t if t > 0 else 0.0


def straight_line_forward(p, Ahat_dense, b):
    """Scalar-loop evaluation of the network, independent of the vectorized path."""
    n = len(b)
    d, h, L = p.dims.d, p.dims.hidden, p.dims.L
    tau = math.sqrt(sum(bi * bi for bi in b))
    v = [math.sqrt(n) / tau * bi for bi in b]
    X = []
    for i in range(n):
        hid = [relu(v[i] * p.enc1[0, c] + p.enc1_bias[c]) for c in range(h)]
        X.append([sum(hid[c] * p.enc2[c, e] for c in range(h)) + p.enc2_bias[e] for e in range(d)])
    for layer in range(L):
        AX = [[sum(Ahat_dense[i, j] * X[j][e] for j in range(n)) for e in range(d)] for i in range(n)]
        X = [[relu(sum(X[i][c] * p.U[layer][c, e] for c in range(d))
                   + sum(AX[i][c] * p.W[layer][c, e] for c in range(d))) for e in range(d)] for i in range(n)]
    out = []
    for i in range(n):
        hid = [relu(sum(X[i][c] * p.dec1[c, k] for c in range(d)) + p.dec1_bias[k]) for k in range(h)]
        out.append((sum(hid[k] * p.dec2[k, 0] for k in range(h)) + p.dec2_bias[0]) * tau / math.sqrt(n))
    return np.array(out)


def small_problem():
    Ahat = CsrMatrix.from_dense([[0.5, -0.25], [0.125, 0.375]])
    p = GnnParams(
        enc1=np.array([[0.3, -0.2]]), enc1_bias=np.array([0.1, 0.05]),
        enc2=np.array([[0.4, -0.1], [0.2, 0.3]]), enc2_bias=np.array([0.02, -0.01]),
        U=np.array([[[0.5, 0.1], [-0.2, 0.6]]]), W=np.array([[[0.3, -0.4], [0.25, 0.1]]]),
        dec1=np.array([[0.7, -0.3], [0.2, 0.4]]), dec1_bias=np.array([0.01, 0.03]),
        dec2=np.array([[0.9], [-0.6]]), dec2_bias=np.array([0.05]),
    )
    return p, Ahat


def test_forward_matches_straight_line_oracle():
    p, Ahat = small_problem()
    for b in ([1.0, 2.0], [-3.0, 0.5], [0.2, -0.7]):
        out, _ = gnn_forward(p, Ahat, np.array(b))
        ref = straight_line_forward(p, Ahat.toarray(), b)
        np.testing.assert_allclose(out, ref, rtol=1e-14, atol=1e-14)


def test_forward_matches_oracle_default_dims():
    A = normalize(random_sparse(7, 0.4, seed=1, diag_shift=1.0))
    p = init_params(GnnDims(d=4, hidden=5, L=3), 2)
    b = np.random.default_rng(0).standard_normal(7)
    np.testing.assert_allclose(gnn_forward(p, A, b)[0], straight_line_forward(p, A.toarray(), b),
                               rtol=1e-13, atol=1e-14)


def test_zero_input_gives_zero():
    p = init_params(GnnDims(), 0)
    A = normalize(random_sparse(12, 0.3, seed=0, diag_shift=1.0))
    out, _ = gnn_forward(p, A, np.zeros(12))
    assert not out.any()


def test_zero_decoder_gives_zero_map():
    p = init_params(GnnDims(), 0)
    p.dec2[:] = 0.0
    p.dec2_bias[:] = 0.0
    A = normalize(random_sparse(12, 0.3, seed=0, diag_shift=1.0))
    rng = np.random.default_rng(0)
    for _ in range(5):
        assert not gnn_forward(p, A, rng.standard_normal(12))[0].any()


def test_dimension_mismatch():
    p = init_params(GnnDims(), 0)
    with pytest.raises(ValueError):
        gnn_forward(p, CsrMatrix.identity(4), np.ones(5))


def test_init_params():
    dims = GnnDims()
    p1, p2, p3 = init_params(dims, 7), init_params(dims, 7), init_params(dims, 8)
    assert p1.equals(p2)
    assert not p1.equals(p3)
    assert np.abs(p1.enc1).max() <= math.sqrt(6 / (1 + dims.hidden))
    assert not p1.enc1_bias.any() and not p1.dec2_bias.any()
    for name, shape in GnnParams.shapes(dims).items():
        assert getattr(p1, name).shape == shape


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), alpha=st.sampled_from([1e-6, 0.5, 1.0, 10.0, 1e6, 3.7e-3]))
def test_positive_homogeneity(seed, alpha):
    rng = np.random.default_rng(seed)
    A = normalize(random_sparse(20, 0.2, seed=seed % 1000, diag_shift=0.5))
    p = init_params(GnnDims(d=8, hidden=16, L=3), rng)
    b = rng.standard_normal(20)
    M = apply_preconditioner(p, A)
    lhs, rhs = M.apply(alpha * b), alpha * M.apply(b)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)


def test_scaled_input_on_sphere():
    A = normalize(random_sparse(25, 0.2, seed=1, diag_shift=0.5))
    p = init_params(GnnDims(), 0)
    B = np.random.default_rng(0).standard_normal((25, 6)) * np.logspace(-8, 8, 6)
    _, cache = gnn_forward(p, A, B)
    np.testing.assert_allclose(np.linalg.norm(cache.v, axis=0), math.sqrt(25), rtol=1e-12)


def test_batch_equals_columnwise():
    A = normalize(random_sparse(30, 0.2, seed=2, diag_shift=0.5))
    p = init_params(GnnDims(), 1)
    B = np.random.default_rng(1).standard_normal((30, 9))
    B[:, 4] = 0.0
    out, _ = gnn_forward(p, A, B)
    for k in range(9):
        col = gnn_forward(p, A, B[:, k])[0]
        np.testing.assert_allclose(out[:, k], col, rtol=1e-12, atol=1e-300)


def test_operator_deterministic():
    A = normalize(random_sparse(30, 0.2, seed=2, diag_shift=0.5))
    M = apply_preconditioner(init_params(GnnDims(), 1), A)
    v = np.random.default_rng(3).standard_normal(30)
    assert np.array_equal(M.apply(v), M.apply(v))
    assert not M.apply(np.zeros(30)).any()


# -- backward -----------------------------------------------------------------


def test_backward_zero_grad_out():
    A = normalize(random_sparse(10, 0.3, seed=0, diag_shift=1.0))
    p = init_params(GnnDims(), 0)
    _, cache = gnn_forward(p, A, np.random.default_rng(0).standard_normal(10))
    g = gnn_backward(p, cache, np.zeros(10))
    assert not g.flat().any()


def test_backward_linear_in_grad_out():
    A = normalize(random_sparse(10, 0.3, seed=0, diag_shift=1.0))
    p = init_params(GnnDims(), 0)
    rng = np.random.default_rng(0)
    _, cache = gnn_forward(p, A, rng.standard_normal((10, 3)))
    G = rng.standard_normal((10, 3))
    np.testing.assert_array_equal(gnn_backward(p, cache, 2 * G).flat(), 2 * gnn_backward(p, cache, G).flat())


def test_backward_shape_mismatch():
    A = normalize(random_sparse(10, 0.3, seed=0, diag_shift=1.0))
    p = init_params(GnnDims(), 0)
    _, cache = gnn_forward(p, A, np.ones(10))
    with pytest.raises(ValueError):
        gnn_backward(p, cache, np.ones(9))


def _sample_safe_input(p, A, rng, width, margin=1e-4):
    """Draw inputs until no relu sits within `margin` of its kink."""
    for _ in range(200):
        B = rng.standard_normal((A.n, width))
        _, cache = gnn_forward(p, A, B)
        if all(np.abs(z).min() > margin for z in cache.pre_activations()):
            return B
    raise RuntimeError("no input away from relu kinks")


def test_backward_matches_central_differences():
    rng = np.random.default_rng(2024)
    A = normalize(random_sparse(6, 0.4, seed=5, diag_shift=1.0))
    p = init_params(GnnDims(d=4, hidden=6, L=2), rng)
    p.enc1_bias[:] = 0.1 * rng.standard_normal(p.enc1_bias.shape)
    p.dec1_bias[:] = 0.1 * rng.standard_normal(p.dec1_bias.shape)
    h = 1e-6
    checked = 0
    for _ in range(5):
        B = _sample_safe_input(p, A, rng, 1)
        G = rng.standard_normal(B.shape)
        out, cache = gnn_forward(p, A, B)
        grads = gnn_backward(p, cache, G)
        for name, arr in p.arrays().items():
            g = grads.arrays()[name]
            picks = rng.choice(arr.size, size=min(arr.size, 8), replace=False)
            for idx in picks:
                old = arr.flat[idx]
                arr.flat[idx] = old + h
                fp = np.sum(G * gnn_forward(p, A, B, keep_cache=False)[0])
                arr.flat[idx] = old - h
                fm = np.sum(G * gnn_forward(p, A, B, keep_cache=False)[0])
                arr.flat[idx] = old
                fd = (fp - fm) / (2 * h)
                an = g.flat[idx]
                assert abs(fd - an) <= 1e-5 * max(abs(an), abs(fd), 1e-3), (name, idx, fd, an)
                checked += 1
    assert checked >= 250
