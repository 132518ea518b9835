"""Sparse matrix helpers and the 2x2 saddle-point block operator."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.io
import scipy.sparse as sp

CsrMatrix = sp.csr_matrix


def spmv(A, x, threads=1):
    """y = A x for a CSR matrix, optionally split over row ranges.

    Every row is reduced in the same order whatever the thread count, so the
    result is bitwise independent of ``threads``.
    """
    x = np.asarray(x, dtype=np.float64)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} times vector of length {x.shape[0]}")
    if threads <= 1 or A.shape[0] < 4 * threads:
        return A @ x
    bounds = np.linspace(0, A.shape[0], threads + 1).astype(int)
    y = np.empty(A.shape[0])

    def work(k):
        lo, hi = bounds[k], bounds[k + 1]
        y[lo:hi] = A[lo:hi] @ x

    with ThreadPoolExecutor(threads) as pool:
        list(pool.map(work, range(threads)))
    return y


class CsrPattern:
    """Fixed sparsity pattern for repeated assembly from element contributions.

    ``rows``/``cols`` are the flattened element index pairs; assembling values
    is a single ``bincount`` in a fixed order, hence deterministic.
    """

    def __init__(self, rows, cols, shape):
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        self.shape = shape
        keys = rows * shape[1] + cols
        uniq, self.inverse = np.unique(keys, return_inverse=True)
        r, c = np.divmod(uniq, shape[1])
        self.indices = c.astype(np.int32)
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(r, minlength=shape[0]))]).astype(np.int32)
        self.row_of_entry = r
        self.nnz = len(uniq)

    def assemble(self, values):
        data = np.bincount(self.inverse, weights=np.asarray(values).ravel(), minlength=self.nnz)
        A = sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)
        A.has_sorted_indices = True
        return A


@dataclass
class BlockOperator:
    """Saddle-point operator [[A, B1], [B2, C]]; ``C`` may be None (zero block)."""

    A: sp.spmatrix
    B1: sp.spmatrix
    B2: sp.spmatrix
    C: Optional[sp.spmatrix] = None

    def __post_init__(self):
        n, m = self.A.shape[0], self.B2.shape[0]
        if self.A.shape != (n, n) or self.B1.shape != (n, m) or self.B2.shape != (m, n):
            raise ValueError("incompatible block shapes")
        if self.C is not None and self.C.shape != (m, m):
            raise ValueError("C block must be square and match B2")

    @property
    def n_primal(self):
        return self.A.shape[0]

    @property
    def shape(self):
        n = self.A.shape[0] + self.B2.shape[0]
        return (n, n)

    def matvec(self, x):
        n = self.n_primal
        u, p = x[:n], x[n:]
        top = self.A @ u + self.B1 @ p
        bot = self.B2 @ u
        if self.C is not None:
            bot = bot + self.C @ p
        return np.concatenate([top, bot])

    __matmul__ = matvec

    def __call__(self, x):
        return self.matvec(x)

    def tocsr(self):
        return sp.bmat([[self.A, self.B1], [self.B2, self.C]], format="csr")


def as_operator(op, threads=1):
    """Return a callable x -> op x for matrices, block operators and callables."""
    if sp.issparse(op):
        A = op.tocsr()
        return lambda x: spmv(A, x, threads)
    if isinstance(op, np.ndarray):
        return lambda x: op @ x
    if hasattr(op, "matvec"):
        return op.matvec
    if callable(op):
        return op
    raise TypeError(f"cannot use {type(op).__name__} as a linear operator")


def write_matrix_market(path, A, comment=""):
    """Dump a sparse matrix (or block operator) in MatrixMarket coordinate format."""
    if isinstance(A, BlockOperator):
        A = A.tocsr()
    scipy.io.mmwrite(path, sp.coo_matrix(A), comment=comment)


def read_matrix_market(path):
    return sp.csr_matrix(scipy.io.mmread(path))
