"""Scale-equivariant graph neural preconditioner, forward and backward by hand.

Architecture, applied column-wise to a block ``B`` of right-hand sides::

    v   = (sqrt(n) / ||b||) b                       scaling onto the sphere
    X0  = relu(v enc1 + enc1_bias)                  encoder hidden layer
    X   = X0 enc2 + enc2_bias                       encoder output, width d
    X   = relu(X U_l + Ahat X W_l),  l = 1..L       residual graph convolutions
    Q   = relu(X dec1 + dec1_bias)                  decoder hidden layer
    o   = Q dec2 + dec2_bias
    out = (||b|| / sqrt(n)) o                       back-scaling

Feature blocks are stored as ``(n, batch, width)`` arrays so that the graph
product is a single sparse-times-dense call on the ``(n, batch*width)`` view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Iterator

import numpy as np

from .sparse import CsrMatrix, spmm

__all__ = [
    "GnnDims",
    "GnnParams",
    "ForwardCache",
    "init_params",
    "gnn_forward",
    "gnn_backward",
    "GnpOperator",
    "apply_preconditioner",
]


@dataclass(frozen=True)
class GnnDims:
    d: int = 16
    hidden: int = 32
    L: int = 8

    def __post_init__(self):
        if min(self.d, self.hidden, self.L) < 1:
            raise ValueError("all dimensions must be >= 1")


@dataclass
class GnnParams:
    """All learnable arrays. ``U`` and ``W`` stack the L layer matrices."""

    enc1: np.ndarray        # (1, hidden)
    enc1_bias: np.ndarray   # (hidden,)
    enc2: np.ndarray        # (hidden, d)
    enc2_bias: np.ndarray   # (d,)
    U: np.ndarray           # (L, d, d)
    W: np.ndarray           # (L, d, d)
    dec1: np.ndarray        # (d, hidden)
    dec1_bias: np.ndarray   # (hidden,)
    dec2: np.ndarray        # (hidden, 1)
    dec2_bias: np.ndarray   # (1,)

    @property
    def dims(self) -> GnnDims:
        return GnnDims(d=self.enc2.shape[1], hidden=self.enc1.shape[1], L=self.U.shape[0])

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        """Arrays in checkpoint order, layers split out as ``U_1, W_1, ...``."""
        yield "enc1", self.enc1
        yield "enc1_bias", self.enc1_bias
        yield "enc2", self.enc2
        yield "enc2_bias", self.enc2_bias
        for layer in range(self.U.shape[0]):
            yield f"U_{layer + 1}", self.U[layer]
            yield f"W_{layer + 1}", self.W[layer]
        yield "dec1", self.dec1
        yield "dec1_bias", self.dec1_bias
        yield "dec2", self.dec2
        yield "dec2_bias", self.dec2_bias

    @classmethod
    def shapes(cls, dims: GnnDims) -> dict[str, tuple[int, ...]]:
        d, h, L = dims.d, dims.hidden, dims.L
        return {
            "enc1": (1, h), "enc1_bias": (h,),
            "enc2": (h, d), "enc2_bias": (d,),
            "U": (L, d, d), "W": (L, d, d),
            "dec1": (d, h), "dec1_bias": (h,),
            "dec2": (h, 1), "dec2_bias": (1,),
        }

    @classmethod
    def zeros(cls, dims: GnnDims) -> "GnnParams":
        return cls(**{k: np.zeros(s) for k, s in cls.shapes(dims).items()})

    def zeros_like(self) -> "GnnParams":
        return GnnParams(**{k: np.zeros_like(v) for k, v in self.arrays().items()})

    def copy(self) -> "GnnParams":
        return GnnParams(**{k: v.copy() for k, v in self.arrays().items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.arrays().values()])

    @property
    def size(self) -> int:
        return sum(v.size for v in self.arrays().values())

    def equals(self, other: "GnnParams") -> bool:
        """Bitwise equality of every array."""
        a, b = self.arrays(), other.arrays()
        return all(a[k].shape == b[k].shape and a[k].tobytes() == b[k].tobytes() for k in a)


def _glorot(rng, shape, fan_in, fan_out):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(dims: GnnDims = GnnDims(), rng=0) -> GnnParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(rng)
    d, h, L = dims.d, dims.hidden, dims.L
    return GnnParams(
        enc1=_glorot(rng, (1, h), 1, h),
        enc1_bias=np.zeros(h),
        enc2=_glorot(rng, (h, d), h, d),
        enc2_bias=np.zeros(d),
        U=np.stack([_glorot(rng, (d, d), d, d) for _ in range(L)]) if L else np.zeros((0, d, d)),
        W=np.stack([_glorot(rng, (d, d), d, d) for _ in range(L)]) if L else np.zeros((0, d, d)),
        dec1=_glorot(rng, (d, h), d, h),
        dec1_bias=np.zeros(h),
        dec2=_glorot(rng, (h, 1), h, 1),
        dec2_bias=np.zeros(1),
    )


@dataclass
class ForwardCache:
    Ahat: CsrMatrix
    B: np.ndarray             # (n, k) inputs
    tau: np.ndarray           # (k,) input norms
    v: np.ndarray             # (n, k) scaled inputs
    enc_pre: np.ndarray       # (n, k, hidden)
    enc_hidden: np.ndarray    # (n, k, hidden)
    layer_in: list            # L blocks (n, k, d)
    layer_ax: list            # L blocks Ahat @ X
    layer_pre: list           # L pre-activations
    dec_in: np.ndarray        # (n, k, d)
    dec_pre: np.ndarray       # (n, k, hidden)
    dec_hidden: np.ndarray    # (n, k, hidden)

    def pre_activations(self) -> list[np.ndarray]:
        """Every array that passes through a relu."""
        return [self.enc_pre, *self.layer_pre, self.dec_pre]


def _graph(Ahat: CsrMatrix, X: np.ndarray) -> np.ndarray:
    n, k, c = X.shape
    return spmm(Ahat, X.reshape(n, k * c)).reshape(n, k, c)


def _forward(p: GnnParams, Ahat: CsrMatrix, B: np.ndarray, keep: bool):
    n, k = B.shape
    tau = np.linalg.norm(B, axis=0)
    nz = tau > 0
    fwd = np.zeros(k)
    fwd[nz] = math.sqrt(n) / tau[nz]
    v = B * fwd

    enc_pre = v[:, :, None] * p.enc1[0] + p.enc1_bias
    enc_hidden = np.maximum(enc_pre, 0.0)
    X = enc_hidden @ p.enc2 + p.enc2_bias
    layer_in, layer_ax, layer_pre = [], [], []
    for layer in range(p.U.shape[0]):
        AX = _graph(Ahat, X)
        P = X @ p.U[layer] + AX @ p.W[layer]
        if keep:
            layer_in.append(X)
            layer_ax.append(AX)
            layer_pre.append(P)
        X = np.maximum(P, 0.0)
    dec_pre = X @ p.dec1 + p.dec1_bias
    dec_hidden = np.maximum(dec_pre, 0.0)
    o = (dec_hidden @ p.dec2)[:, :, 0] + p.dec2_bias[0]
    back = tau / math.sqrt(n)
    out = o * back
    out[:, ~nz] = 0.0
    cache = None
    if keep:
        cache = ForwardCache(Ahat, B, tau, v, enc_pre, enc_hidden, layer_in, layer_ax,
                             layer_pre, X, dec_pre, dec_hidden)
    return out, cache


def gnn_forward(p: GnnParams, Ahat: CsrMatrix, b, keep_cache: bool = True):
    """Apply the network to a vector ``b`` (n,) or a block ``B`` (n, k).

    Columns with zero norm map to zero. Returns ``(out, cache)``; ``cache`` is
    None when ``keep_cache`` is false.
    """
    b = np.asarray(b, dtype=np.float64)
    vec = b.ndim == 1
    B = b[:, None] if vec else b
    if B.ndim != 2 or B.shape[0] != Ahat.n:
        raise ValueError(f"dimension mismatch: matrix is {Ahat.n}x{Ahat.n}, input has shape {b.shape}")
    out, cache = _forward(p, Ahat, B, keep_cache)
    return (out[:, 0] if vec else out), cache


def _relu_grad(dY, pre):
    return np.where(pre > 0.0, dY, 0.0)


def _contract(X, dY):
    """``sum_{n,k} X[..., i] dY[..., j]`` as an (i, j) matrix."""
    return X.reshape(-1, X.shape[-1]).T @ dY.reshape(-1, dY.shape[-1])


def gnn_backward(p: GnnParams, cache: ForwardCache, grad_out) -> GnnParams:
    """Gradient of ``<grad_out, out>`` w.r.t. every parameter.

    The input norms are functions of ``b`` only, so they are constants here.
    """
    G = np.asarray(grad_out, dtype=np.float64)
    if G.ndim == 1:
        G = G[:, None]
    if G.shape != cache.B.shape:
        raise ValueError(f"grad_out shape {G.shape} does not match forward input {cache.B.shape}")
    n = G.shape[0]
    g = p.zeros_like()
    Ahat_T = cache.Ahat.transpose()

    go = G * (cache.tau / math.sqrt(n))          # d/d o
    g.dec2[:, 0] = np.tensordot(cache.dec_hidden, go, axes=([0, 1], [0, 1]))
    g.dec2_bias[0] = go.sum()
    dQ = _relu_grad(go[:, :, None] * p.dec2[:, 0], cache.dec_pre)
    g.dec1[:] = _contract(cache.dec_in, dQ)
    g.dec1_bias[:] = dQ.sum(axis=(0, 1))
    dX = dQ @ p.dec1.T

    for layer in reversed(range(p.U.shape[0])):
        dP = _relu_grad(dX, cache.layer_pre[layer])
        g.U[layer] = _contract(cache.layer_in[layer], dP)
        g.W[layer] = _contract(cache.layer_ax[layer], dP)
        dX = dP @ p.U[layer].T + _graph(Ahat_T, dP @ p.W[layer].T)

    g.enc2[:] = _contract(cache.enc_hidden, dX)
    g.enc2_bias[:] = dX.sum(axis=(0, 1))
    dP0 = _relu_grad(dX @ p.enc2.T, cache.enc_pre)
    g.enc1[0] = np.tensordot(cache.v, dP0, axes=([0, 1], [0, 1]))
    g.enc1_bias[:] = dP0.sum(axis=(0, 1))
    return g


class GnpOperator:
    """Trained network exposed as a flexible preconditioner ``z = M(v)``."""

    name = "gnp"

    def __init__(self, params: GnnParams, Ahat: CsrMatrix):
        self.params = params
        self.Ahat = Ahat

    def apply(self, v):
        return gnn_forward(self.params, self.Ahat, v, keep_cache=False)[0]


def apply_preconditioner(p: GnnParams, Ahat: CsrMatrix) -> GnpOperator:
    return GnpOperator(p, Ahat)
