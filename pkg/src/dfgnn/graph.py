"""Sparse graph storage and the normalized low-/high-pass operators.

The stored adjacency never carries self-loops; they only appear inside
:func:`build_operators` where ``A + I`` is normalized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numba
import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Canonical compressed-sparse-row matrix (sorted columns, no stored zeros)."""

    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    _scipy: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        row_ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        col_idx = np.ascontiguousarray(self.col_idx, dtype=np.int64)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if row_ptr.shape != (self.n_rows + 1,):
            raise ValueError("row_ptr must have length n_rows + 1")
        if row_ptr[0] != 0 or row_ptr[-1] != len(col_idx) or len(col_idx) != len(values):
            raise ValueError("row_ptr does not match col_idx/values lengths")
        if np.any(np.diff(row_ptr) < 0):
            raise ValueError("row_ptr must be non-decreasing")
        if len(col_idx) and (col_idx.min() < 0 or col_idx.max() >= self.n_cols):
            raise ValueError("column index out of range")
        if len(col_idx) > 1:
            step = np.diff(col_idx)
            row_start = np.zeros(len(col_idx), dtype=bool)
            row_start[row_ptr[1:-1][row_ptr[1:-1] < len(col_idx)]] = True
            bad = (step <= 0) & ~row_start[1:]
            if bad.any():
                pos = int(np.argmax(bad)) + 1
                row = int(np.searchsorted(row_ptr, pos, side="right")) - 1
                raise ValueError(f"row {row}: column indices must be strictly increasing")
        if np.any(values == 0):
            raise ValueError("explicit zeros are not allowed")
        for arr in (row_ptr, col_idx, values):
            arr.setflags(write=False)
        object.__setattr__(self, "row_ptr", row_ptr)
        object.__setattr__(self, "col_idx", col_idx)
        object.__setattr__(self, "values", values)
        object.__setattr__(
            self, "_scipy",
            sp.csr_matrix((values, col_idx, row_ptr), shape=(self.n_rows, self.n_cols)),
        )

    @property
    def nnz(self) -> int:
        return len(self.values)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for i in range(self.n_rows):
            lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
            out[i, self.col_idx[lo:hi]] = self.values[lo:hi]
        return out

    def transpose(self) -> CsrMatrix:
        return _from_scipy(self._scipy.T.tocsr())

    @cached_property
    def symmetric(self) -> bool:
        return self.is_symmetric()

    @cached_property
    def T(self) -> CsrMatrix:
        return self if self.symmetric else self.transpose()

    def is_symmetric(self, tol: float = 0.0) -> bool:
        if self.n_rows != self.n_cols:
            return False
        diff = self._scipy - self._scipy.T
        return diff.nnz == 0 or float(np.abs(diff.data).max()) <= tol

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def edge_list(self) -> np.ndarray:
        """Upper-triangular (i < j) edge pairs of a symmetric pattern."""
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.row_ptr))
        keep = rows < self.col_idx
        return np.stack([rows[keep], self.col_idx[keep]], axis=1)

    @classmethod
    def from_dense(cls, M: np.ndarray) -> CsrMatrix:
        return _from_scipy(sp.csr_matrix(np.asarray(M, dtype=np.float64)))


def _from_scipy(m: sp.spmatrix) -> CsrMatrix:
    m = sp.csr_matrix(m)
    m.eliminate_zeros()
    m.sum_duplicates()
    m.sort_indices()
    return CsrMatrix(m.shape[0], m.shape[1], m.indptr, m.indices, m.data)


@dataclass(frozen=True, eq=False)
class GraphOperators:
    """Normalized adjacency (low-pass) and normalized Laplacian (high-pass)."""

    adj_norm: CsrMatrix
    lap_norm: CsrMatrix
    n: int


def from_edges(n: int, edges, symmetrize: bool = True) -> CsrMatrix:
    """Binary CSR adjacency from index pairs; duplicates collapse silently."""
    e = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                   dtype=np.int64).reshape(-1, 2)
    if len(e):
        if e.min() < 0 or e.max() >= n:
            raise ValueError(f"edge endpoint out of range for n={n}")
        if np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self-loops are not allowed in the raw adjacency")
    if symmetrize:
        e = np.concatenate([e, e[:, ::-1]], axis=0)
    e = np.unique(e, axis=0) if len(e) else e
    m = sp.csr_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    # dedup already happened; sum_duplicates would otherwise produce weight 2
    return _from_scipy(m)


def build_operators(A: CsrMatrix) -> GraphOperators:
    """Return ``Ã = D̄^{-1/2}(A+I)D̄^{-1/2}`` and ``L̃ = I - Ã``."""
    if A.n_rows != A.n_cols or not A.is_symmetric():
        raise ValueError("adjacency must be square and symmetric")
    if np.any(A.values != 1.0):
        raise ValueError("adjacency must be binary")
    n = A.n_rows
    a = A._scipy
    if a.diagonal().any():
        raise ValueError("adjacency must not contain self-loops")
    eye = sp.identity(n, format="csr")
    inv_sqrt = 1.0 / np.sqrt(A.degrees().astype(np.float64) + 1.0)
    d = sp.diags(inv_sqrt)
    adj_norm = (d @ (a + eye) @ d).tocsr()
    lap_norm = (eye - adj_norm).tocsr()
    return GraphOperators(_from_scipy(adj_norm), _from_scipy(lap_norm), n)


def spmm(S: CsrMatrix, D: np.ndarray) -> np.ndarray:
    """Sparse-dense product ``S @ D``.

    Every output row is the sum of its own row's stored products in column
    order, so the result does not depend on any scheduling.
    """
    D = np.ascontiguousarray(D, dtype=np.float64)
    if D.ndim != 2 or S.n_cols != D.shape[0]:
        raise ValueError(f"spmm shape mismatch: {S.shape} @ {D.shape}")
    out = np.empty((S.n_rows, D.shape[1]))
    _csr_dense(S.row_ptr, S.col_idx, S.values, D, out)
    return out


@numba.njit(cache=True)
def _csr_dense(row_ptr, col_idx, values, D, out):
    n, k = out.shape
    for i in range(n):
        for c in range(k):
            out[i, c] = 0.0
        for p in range(row_ptr[i], row_ptr[i + 1]):
            j = col_idx[p]
            v = values[p]
            for c in range(k):
                out[i, c] += v * D[j, c]
