import numpy as np
import pytest

from gnp.generators import convection_diffusion_2d, random_sparse
from gnp.gnn import GnnDims, init_params
from gnp.sparse import CsrMatrix
from gnp.training import AdamState, TrainConfig, adam_step, l1_residual_loss, train_preconditioner

SMALL = GnnDims(d=4, hidden=8, L=2)


def test_loss_zero_at_exact_solution():
    A = random_sparse(10, 0.3, seed=0, diag_shift=1.0)
    X = np.random.default_rng(0).standard_normal((10, 4))
    loss, grad = l1_residual_loss(A, X, X)
    assert loss == 0.0
    assert not grad.any()


def test_loss_identity_example():
    loss, grad = l1_residual_loss(CsrMatrix.identity(2), np.array([1.0, -1.0]), np.zeros(2))
    assert loss == 2.0
    assert grad.tolist() == [1.0, -1.0]


def test_loss_is_mean_over_columns():
    A = CsrMatrix.identity(2)
    out = np.array([[1.0, 3.0], [0.0, 0.0]])
    loss, grad = l1_residual_loss(A, out, np.zeros((2, 2)))
    assert loss == 2.0
    np.testing.assert_array_equal(grad, [[0.5, 0.5], [0.0, 0.0]])


def test_loss_positively_homogeneous():
    A = random_sparse(15, 0.3, seed=1, diag_shift=1.0)
    rng = np.random.default_rng(1)
    out, x = rng.standard_normal((15, 3)), rng.standard_normal((15, 3))
    base = l1_residual_loss(A, out, x)[0]
    for a in (1e-3, 2.0, 1e4):
        assert l1_residual_loss(A, a * out, a * x)[0] == pytest.approx(a * base, rel=1e-13)


def test_loss_gradient_matches_differences():
    A = random_sparse(12, 0.3, seed=2, diag_shift=1.0)
    rng = np.random.default_rng(2)
    out, x = rng.standard_normal((12, 2)), rng.standard_normal((12, 2))
    _, grad = l1_residual_loss(A, out, x)
    h = 1e-7
    for idx in [(0, 0), (5, 1), (11, 0)]:
        e = np.zeros_like(out)
        e[idx] = h
        fd = (l1_residual_loss(A, out + e, x)[0] - l1_residual_loss(A, out - e, x)[0]) / (2 * h)
        assert fd == pytest.approx(grad[idx], rel=1e-6)


def test_loss_shape_mismatch():
    with pytest.raises(ValueError):
        l1_residual_loss(CsrMatrix.identity(2), np.ones(2), np.ones((2, 1)))


def test_adam_zero_gradient_keeps_params():
    p = init_params(SMALL, 0)
    ref = p.copy()
    st = AdamState.for_params(p)
    for _ in range(3):
        adam_step(p, p.zeros_like(), st)
    assert p.equals(ref)
    assert st.t == 3


def test_adam_constant_gradient_step_is_lr_times_sign():
    p = init_params(SMALL, 0)
    g = p.zeros_like()
    rng = np.random.default_rng(0)
    for arr in g.arrays().values():
        arr[...] = rng.choice([-2.0, 0.5, 3.0], size=arr.shape)
    st = AdamState.for_params(p)
    for _ in range(5):
        before = p.flat()
        adam_step(p, g, st, lr=1e-3)
        step = before - p.flat()
        np.testing.assert_allclose(step, 1e-3 * np.sign(g.flat()), rtol=1e-7)


def test_adam_deterministic():
    p1, p2 = init_params(SMALL, 3), init_params(SMALL, 3)
    g = init_params(SMALL, 4)
    s1, s2 = AdamState.for_params(p1), AdamState.for_params(p2)
    for _ in range(4):
        adam_step(p1, g, s1)
        adam_step(p2, g, s2)
    assert p1.equals(p2)


def test_train_zero_steps_returns_initial_params():
    A = convection_diffusion_2d(6)
    cfg = TrainConfig(steps=0, dims=SMALL, arnoldi_m=8, seed=5)
    p, hist = train_preconditioner(A, cfg)
    seeds = np.random.SeedSequence(5).spawn(4)
    assert p.equals(init_params(SMALL, np.random.default_rng(seeds[0])))
    assert hist.best_step == 0 and len(hist.monitor_loss) == 1


def test_train_deterministic_and_improves():
    A = convection_diffusion_2d(6)
    cfg = TrainConfig(steps=60, dims=SMALL, arnoldi_m=8, seed=1, lr=1e-2)
    p1, h1 = train_preconditioner(A, cfg)
    p2, h2 = train_preconditioner(A, cfg)
    assert p1.equals(p2)
    assert h1.train_loss == h2.train_loss
    assert len(h1.train_loss) == 60 and len(h1.monitor_loss) == 61
    assert h1.best_monitor_loss < h1.initial_monitor_loss
    assert h1.best_monitor_loss == min(h1.monitor_loss)
    assert h1.best_step > 0


def test_train_progress_callback():
    calls = []
    cfg = TrainConfig(steps=3, dims=SMALL, arnoldi_m=5)
    train_preconditioner(convection_diffusion_2d(4), cfg, progress=lambda *a: calls.append(a))
    assert [c[0] for c in calls] == [1, 2, 3]


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch=4, spectral_count=8)
    with pytest.raises(ValueError):
        TrainConfig(steps=-1)
