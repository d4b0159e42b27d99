"""Compressed sparse row matrices, products, normalization and Matrix Market I/O.

The products delegate to SciPy's CSR kernels, which accumulate each row
sequentially in stored (sorted-column) order. That makes ``spmv`` and every
column of ``spmm`` bitwise identical.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field
from typing import BinaryIO, TextIO, Union

import numpy as np
import scipy.sparse as sps

__all__ = [
    "CsrMatrix",
    "MatrixMarketError",
    "UnsupportedFormatError",
    "parse_matrix_market",
    "read_matrix_market",
    "write_matrix_market",
    "spmv",
    "spmm",
    "gershgorin_gamma",
    "prescale",
    "normalize",
]


class MatrixMarketError(ValueError):
    """Malformed Matrix Market content (bad header, counts, or indices)."""


class UnsupportedFormatError(MatrixMarketError):
    """Valid Matrix Market content in a variant this package does not read."""


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Square sparse matrix in CSR form.

    Instances are immutable; construct through :meth:`from_coo`,
    :meth:`from_dense` or :meth:`from_scipy` unless the arrays are already
    canonical (sorted columns, no duplicates).
    """

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    _csr: sps.csr_matrix = field(init=False, repr=False)
    _csr_t: list = field(init=False, repr=False, default_factory=list)

    def __post_init__(self):
        row_ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        col_idx = np.ascontiguousarray(self.col_idx, dtype=np.int64)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        n = int(self.n)
        if n < 0:
            raise ValueError("negative dimension")
        if row_ptr.shape != (n + 1,):
            raise ValueError(f"row_ptr must have length n+1={n + 1}")
        if row_ptr[0] != 0 or np.any(np.diff(row_ptr) < 0):
            raise ValueError("row_ptr must start at 0 and be non-decreasing")
        nnz = int(row_ptr[-1])
        if col_idx.shape != (nnz,) or values.shape != (nnz,):
            raise ValueError("row_ptr[n] must equal len(col_idx) == len(values)")
        if nnz and (col_idx.min() < 0 or col_idx.max() >= n):
            raise ValueError("column index out of range")
        # strictly increasing columns inside each row
        if nnz > 1:
            step = np.diff(col_idx)
            row_start = np.zeros(nnz, dtype=bool)
            row_start[row_ptr[1:-1][row_ptr[1:-1] < nnz]] = True
            if np.any((step <= 0) & ~row_start[1:]):
                raise ValueError("column indices must be strictly increasing within rows")
        for arr in (row_ptr, col_idx, values):
            arr.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "row_ptr", row_ptr)
        object.__setattr__(self, "col_idx", col_idx)
        object.__setattr__(self, "values", values)
        csr = sps.csr_matrix((values, col_idx, row_ptr), shape=(n, n))
        csr.has_sorted_indices = True
        object.__setattr__(self, "_csr", csr)

    # -- constructors ---------------------------------------------------

    @classmethod
    def from_coo(cls, n, rows, cols, vals) -> "CsrMatrix":
        """Build from coordinate triplets; duplicate entries are summed."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= n):
            raise ValueError("coordinate index out of range")
        coo = sps.coo_matrix((vals, (rows, cols)), shape=(n, n))
        return cls.from_scipy(coo)

    @classmethod
    def from_scipy(cls, mat) -> "CsrMatrix":
        csr = sps.csr_matrix(mat, dtype=np.float64, copy=True)
        if csr.shape[0] != csr.shape[1]:
            raise ValueError(f"matrix must be square, got {csr.shape}")
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(csr.shape[0], csr.indptr, csr.indices, csr.data)

    @classmethod
    def from_dense(cls, a) -> "CsrMatrix":
        a = np.asarray(a, dtype=np.float64)
        return cls.from_scipy(sps.csr_matrix(a))

    @classmethod
    def identity(cls, n: int) -> "CsrMatrix":
        idx = np.arange(n)
        return cls(n, np.arange(n + 1), idx, np.ones(n))

    # -- views ------------------------------------------------------------

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    def to_scipy(self) -> sps.csr_matrix:
        """The backing SciPy matrix. Do not mutate it."""
        return self._csr

    def transpose(self) -> "CsrMatrix":
        if not self._csr_t:
            self._csr_t.append(CsrMatrix.from_scipy(self._csr.T))
        return self._csr_t[0]

    @property
    def T(self) -> "CsrMatrix":
        return self.transpose()

    def toarray(self) -> np.ndarray:
        return self._csr.toarray()

    def diagonal(self) -> np.ndarray:
        return self._csr.diagonal()

    def has_structural_diagonal(self) -> np.ndarray:
        """Boolean mask of rows whose diagonal entry is stored."""
        rows = np.repeat(np.arange(self.n), np.diff(self.row_ptr))
        present = np.zeros(self.n, dtype=bool)
        present[rows[self.col_idx == rows]] = True
        return present

    def content_hash(self) -> str:
        """SHA-256 over n and the little-endian CSR arrays."""
        h = hashlib.sha256()
        h.update(np.int64(self.n).astype("<i8").tobytes())
        h.update(self.row_ptr.astype("<i8").tobytes())
        h.update(self.col_idx.astype("<i8").tobytes())
        h.update(self.values.astype("<f8").tobytes())
        return h.hexdigest()

    def __matmul__(self, other):
        other = np.asarray(other)
        if other.ndim == 1:
            return spmv(self, other)
        return spmm(self, other)

    def __repr__(self):
        return f"CsrMatrix(n={self.n}, nnz={self.nnz})"


# -- products ---------------------------------------------------------------


def spmv(A: CsrMatrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.n,):
        raise ValueError(f"dimension mismatch: matrix is {A.n}x{A.n}, vector has shape {x.shape}")
    return A._csr @ x


def spmm(A: CsrMatrix, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != A.n:
        raise ValueError(f"dimension mismatch: matrix is {A.n}x{A.n}, block has shape {X.shape}")
    return A._csr @ X


# -- normalization ----------------------------------------------------------


def gershgorin_gamma(A: CsrMatrix) -> float:
    """Gershgorin bound on the spectral radius.

    ``min(max row abs-sum, max column abs-sum)``; an all-zero matrix gets 1.0
    so that callers can always divide by the result.
    """
    if A.nnz == 0:
        return 1.0
    absvals = np.abs(A.values)
    row_sums = np.add.reduceat(absvals, A.row_ptr[:-1][np.diff(A.row_ptr) > 0])
    col_sums = np.bincount(A.col_idx, weights=absvals, minlength=A.n)
    gamma = float(min(row_sums.max(), col_sums.max()))
    return gamma if gamma > 0.0 else 1.0


def prescale(A: CsrMatrix, gamma: float) -> CsrMatrix:
    if gamma == 0:
        raise ValueError("gamma must be nonzero")
    return CsrMatrix(A.n, A.row_ptr, A.col_idx, A.values / gamma)


def normalize(A: CsrMatrix) -> CsrMatrix:
    """``A / gershgorin_gamma(A)``."""
    return prescale(A, gershgorin_gamma(A))


# -- Matrix Market ----------------------------------------------------------

_SUPPORTED_SYMMETRY = ("general", "symmetric", "skew-symmetric")


def parse_matrix_market(data: Union[bytes, str, BinaryIO, TextIO]) -> CsrMatrix:
    """Parse a real coordinate Matrix Market file into a :class:`CsrMatrix`.

    Symmetric and skew-symmetric storage is expanded to both triangles (the
    mirrored entry is negated for skew-symmetric). Duplicate coordinates are
    summed. Indices in the file are 1-based.

    Raises
    ------
    UnsupportedFormatError
        For array, complex, integer-free pattern, hermitian or non-square input.
    MatrixMarketError
        For malformed headers, bad counts, or out-of-range indices.
    """
    if hasattr(data, "read"):
        data = data.read()
    if isinstance(data, bytes):
        data = data.decode("ascii", errors="strict")
    lines = io.StringIO(data)

    header = lines.readline()
    tokens = header.strip().lower().split()
    if len(tokens) != 5 or tokens[0] != "%%matrixmarket":
        raise MatrixMarketError(f"bad Matrix Market banner: {header.strip()!r}")
    _, obj, fmt, fieldtype, symmetry = tokens
    if obj != "matrix":
        raise UnsupportedFormatError(f"unsupported object {obj!r}")
    if fmt != "coordinate":
        raise UnsupportedFormatError(f"unsupported format {fmt!r}; only coordinate is read")
    if fieldtype not in ("real", "integer"):
        raise UnsupportedFormatError(f"unsupported field {fieldtype!r}")
    if symmetry not in _SUPPORTED_SYMMETRY:
        raise UnsupportedFormatError(f"unsupported symmetry {symmetry!r}")

    size_line = None
    for line in lines:
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        size_line = s
        break
    if size_line is None:
        raise MatrixMarketError("missing size line")
    try:
        nrows, ncols, nentries = (int(t) for t in size_line.split())
    except ValueError:
        raise MatrixMarketError(f"bad size line: {size_line!r}") from None
    if nrows != ncols:
        raise UnsupportedFormatError(f"matrix must be square, got {nrows}x{ncols}")

    body = [s for s in (ln.strip() for ln in lines) if s and not s.startswith("%")]
    if len(body) != nentries:
        raise MatrixMarketError(f"header declares {nentries} entries, found {len(body)}")
    if nentries:
        try:
            entries = np.array([ln.split()[:3] for ln in body], dtype=np.float64)
        except ValueError:
            raise MatrixMarketError("entry lines must be 'row col value'") from None
        if entries.shape[1] != 3:
            raise MatrixMarketError("entry lines must be 'row col value'")
        rows_f, cols_f, vals = entries.T
        if np.any(rows_f != np.floor(rows_f)) or np.any(cols_f != np.floor(cols_f)):
            raise MatrixMarketError("non-integer index")
        rows = rows_f.astype(np.int64) - 1
        cols = cols_f.astype(np.int64) - 1
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0)
    if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= nrows or cols.max() >= ncols):
        raise MatrixMarketError("entry index out of range")
    if not np.all(np.isfinite(vals)):
        raise MatrixMarketError("non-finite value")

    if symmetry != "general":
        off = rows != cols
        sign = -1.0 if symmetry == "skew-symmetric" else 1.0
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, sign * vals[off]]),
        )
    return CsrMatrix.from_coo(nrows, rows, cols, vals)


def read_matrix_market(path) -> CsrMatrix:
    with open(path, "rb") as fh:
        return parse_matrix_market(fh.read())


def write_matrix_market(A: CsrMatrix, path_or_buf=None, comment: str | None = None) -> str | None:
    """Write ``A`` as a general real coordinate file (``%.17g`` round-trips f64).

    Returns the text when ``path_or_buf`` is None.
    """
    out = io.StringIO()
    out.write("%%MatrixMarket matrix coordinate real general\n")
    if comment:
        for line in comment.splitlines():
            out.write(f"% {line}\n")
    out.write(f"{A.n} {A.n} {A.nnz}\n")
    rows = np.repeat(np.arange(A.n), np.diff(A.row_ptr))
    for i, j, v in zip(rows + 1, A.col_idx + 1, A.values):
        out.write(f"{i} {j} {v:.17g}\n")
    text = out.getvalue()
    if path_or_buf is None:
        return text
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w") as fh:
            fh.write(text)
    return None
