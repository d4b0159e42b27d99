"""Training the graph neural preconditioner on streaming (b, x) pairs."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .gnn import GnnDims, GnnParams, gnn_backward, gnn_forward, init_params
from .sampler import assemble_batch, build_spectral_sampler
from .sparse import CsrMatrix, normalize, spmm

__all__ = [
    "l1_residual_loss",
    "AdamState",
    "adam_step",
    "TrainConfig",
    "TrainHistory",
    "train_preconditioner",
]

log = logging.getLogger(__name__)


def l1_residual_loss(A: CsrMatrix, out_batch, x_batch):
    """Mean over columns of ``||A out_k - A x_k||_1`` and its gradient w.r.t. ``out``.

    ``sign(0)`` is taken as 0.
    """
    out_batch = np.asarray(out_batch, dtype=np.float64)
    x_batch = np.asarray(x_batch, dtype=np.float64)
    if out_batch.shape != x_batch.shape:
        raise ValueError("out and x batches must have the same shape")
    vec = out_batch.ndim == 1
    if vec:
        out_batch, x_batch = out_batch[:, None], x_batch[:, None]
    k = out_batch.shape[1]
    R = spmm(A, out_batch) - spmm(A, x_batch)
    loss = float(np.abs(R).sum() / k)
    grad = spmm(A.transpose(), np.sign(R)) / k
    return loss, (grad[:, 0] if vec else grad)


@dataclass
class AdamState:
    m: GnnParams
    v: GnnParams
    t: int = 0

    @classmethod
    def for_params(cls, p: GnnParams) -> "AdamState":
        return cls(p.zeros_like(), p.zeros_like(), 0)


def adam_step(p: GnnParams, grads: GnnParams, st: AdamState, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """Bias-corrected Adam update, in place. Returns ``(p, st)``."""
    st.t += 1
    bc1 = 1.0 - beta1 ** st.t
    bc2 = 1.0 - beta2 ** st.t
    for name, w in p.arrays().items():
        g = getattr(grads, name)
        m = getattr(st.m, name)
        v = getattr(st.v, name)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        w -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return p, st


@dataclass
class TrainConfig:
    lr: float = 1e-3
    steps: int = 2000
    batch: int = 16
    spectral_count: int = 8
    arnoldi_m: int = 40
    seed: int = 0
    monitor_batch: int = 16
    dims: GnnDims = field(default_factory=GnnDims)

    def __post_init__(self):
        if self.batch < self.spectral_count or self.spectral_count < 0:
            raise ValueError("need 0 <= spectral_count <= batch")
        if self.steps < 0 or self.batch < 1 or self.monitor_batch < 1:
            raise ValueError("steps >= 0, batch >= 1 and monitor_batch >= 1 required")


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    monitor_loss: list = field(default_factory=list)   # index 0 is before any step
    best_step: int = 0
    seconds: float = 0.0

    @property
    def initial_monitor_loss(self) -> float:
        return self.monitor_loss[0]

    @property
    def best_monitor_loss(self) -> float:
        return self.monitor_loss[self.best_step]


def _monitor_split(cfg: TrainConfig) -> int:
    return round(cfg.monitor_batch * cfg.spectral_count / cfg.batch)


def train_preconditioner(A: CsrMatrix, cfg: TrainConfig = TrainConfig(), progress=None):
    """Train on ``A`` (expected prescaled) and return ``(best_params, history)``.

    A fixed monitoring batch, drawn once from the same distribution as the
    training batches, scores the parameters after every step; the snapshot
    with the lowest monitoring loss is returned.
    """
    t0 = time.perf_counter()
    Ahat = normalize(A)
    seeds = np.random.SeedSequence(cfg.seed).spawn(4)
    params = init_params(cfg.dims, np.random.default_rng(seeds[0]))
    sampler = build_spectral_sampler(A, cfg.arnoldi_m, np.random.default_rng(seeds[1]))
    monitor = assemble_batch(sampler, A, cfg.monitor_batch, _monitor_split(cfg), np.random.default_rng(seeds[2]))
    rng = np.random.default_rng(seeds[3])

    def monitor_loss(p):
        out, _ = gnn_forward(p, Ahat, monitor.B, keep_cache=False)
        return l1_residual_loss(A, out, monitor.X)[0]

    hist = TrainHistory()
    hist.monitor_loss.append(monitor_loss(params))
    best = params.copy()
    state = AdamState.for_params(params)
    for step in range(1, cfg.steps + 1):
        batch = assemble_batch(sampler, A, cfg.batch, cfg.spectral_count, rng)
        out, cache = gnn_forward(params, Ahat, batch.B)
        loss, g_out = l1_residual_loss(A, out, batch.X)
        grads = gnn_backward(params, cache, g_out)
        adam_step(params, grads, state, cfg.lr)
        hist.train_loss.append(loss)
        mloss = monitor_loss(params)
        hist.monitor_loss.append(mloss)
        if mloss < hist.monitor_loss[hist.best_step]:
            hist.best_step = step
            best = params.copy()
        if progress is not None:
            progress(step, loss, mloss)
        if step % 200 == 0:
            log.info("step %d  train %.4e  monitor %.4e  best %.4e",
                     step, loss, mloss, hist.best_monitor_loss)
    hist.seconds = time.perf_counter() - t0
    return best, hist
