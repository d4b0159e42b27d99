"""Versioned binary checkpoints for trained network parameters.

Layout::

    GNPCKPT <version>\\n
    <one line of JSON: dims, matrix metadata, array names/shapes>\\n
    <arrays as little-endian float64, in header order>

Arrays are written in a fixed order: ``enc1, enc1_bias, enc2, enc2_bias,
U_1, W_1, ..., U_L, W_L, dec1, dec1_bias, dec2, dec2_bias``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .gnn import GnnDims, GnnParams
from .sparse import CsrMatrix

__all__ = ["CheckpointError", "MatrixMeta", "save_checkpoint", "load_checkpoint", "MAGIC", "VERSION"]

MAGIC = b"GNPCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class MatrixMeta:
    n: int
    nnz: int
    sha256: str

    @classmethod
    def of(cls, A: CsrMatrix) -> "MatrixMeta":
        return cls(A.n, A.nnz, A.content_hash())


def save_checkpoint(p: GnnParams, dims: GnnDims, matrix_meta: MatrixMeta | CsrMatrix) -> bytes:
    if isinstance(matrix_meta, CsrMatrix):
        matrix_meta = MatrixMeta.of(matrix_meta)
    if p.dims != dims:
        raise ValueError(f"parameter shapes {p.dims} do not match dims {dims}")
    named = list(p.named_arrays())
    header = {
        "dims": {"d": dims.d, "hidden": dims.hidden, "L": dims.L},
        "matrix": {"n": matrix_meta.n, "nnz": matrix_meta.nnz, "sha256": matrix_meta.sha256},
        "arrays": [[name, list(a.shape)] for name, a in named],
    }
    parts = [MAGIC + f" {VERSION}\n".encode(), json.dumps(header, sort_keys=True).encode() + b"\n"]
    parts += [np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in named]
    return b"".join(parts)


def load_checkpoint(data: bytes, matrix: Optional[CsrMatrix] = None):
    """Parse a checkpoint. Returns ``(params, dims, matrix_meta)``.

    If ``matrix`` is given and its content hash differs from the recorded one,
    a :class:`UserWarning` is issued.
    """
    try:
        magic_line, rest = data.split(b"\n", 1)
        magic, version = magic_line.split(b" ")
        header_line, blob = rest.split(b"\n", 1)
    except ValueError:
        raise CheckpointError("truncated or malformed checkpoint header") from None
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    try:
        version = int(version)
    except ValueError:
        raise CheckpointError("bad version field") from None
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}; expected {VERSION}")
    try:
        header = json.loads(header_line)
        dims = GnnDims(**header["dims"])
        meta = MatrixMeta(**header["matrix"])
        entries = [(str(name), tuple(int(s) for s in shape)) for name, shape in header["arrays"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"malformed checkpoint header: {exc}") from None

    expected = [(name, a.shape) for name, a in GnnParams.zeros(dims).named_arrays()]
    if entries != expected:
        raise CheckpointError("array table does not match the declared dimensions")
    total = sum(int(np.prod(s)) for _, s in entries) * 8
    if len(blob) != total:
        raise CheckpointError(f"checkpoint payload is {len(blob)} bytes, expected {total}")

    flat = np.frombuffer(blob, dtype="<f8").astype(np.float64)
    arrays, off = {}, 0
    for name, shape in entries:
        size = int(np.prod(shape))
        arrays[name] = flat[off : off + size].reshape(shape).copy()
        off += size
    L = dims.L
    params = GnnParams(
        enc1=arrays["enc1"], enc1_bias=arrays["enc1_bias"],
        enc2=arrays["enc2"], enc2_bias=arrays["enc2_bias"],
        U=np.stack([arrays[f"U_{i + 1}"] for i in range(L)]),
        W=np.stack([arrays[f"W_{i + 1}"] for i in range(L)]),
        dec1=arrays["dec1"], dec1_bias=arrays["dec1_bias"],
        dec2=arrays["dec2"], dec2_bias=arrays["dec2_bias"],
    )
    if matrix is not None and matrix.content_hash() != meta.sha256:
        warnings.warn(
            f"checkpoint was trained on a different matrix (n={meta.n}, nnz={meta.nnz}); "
            f"got n={matrix.n}, nnz={matrix.nnz}",
            UserWarning,
            stacklevel=2,
        )
    return params, dims, meta
