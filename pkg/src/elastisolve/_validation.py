"""Small input-validation helpers, in the spirit of ``sklearn.utils.validation``."""

import numpy as np
import scipy.sparse as sp


def check_vector(x, n=None, name="x", copy=False):
    """Return ``x`` as a 1-D float64 array, optionally checking its length."""
    x = np.array(x, dtype=np.float64, copy=copy) if copy else np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {x.shape}")
    if n is not None and x.shape[0] != n:
        raise ValueError(f"{name} has length {x.shape[0]}, expected {n}")
    return x


def check_square_csr(A, name="A"):
    """Return ``A`` as a square CSR matrix with sorted indices."""
    if not sp.issparse(A):
        A = sp.csr_matrix(np.atleast_2d(np.asarray(A, dtype=np.float64)))
    A = A.tocsr()
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    if not A.has_sorted_indices:
        A = A.sorted_indices()
    return A


def check_positive(value, name, strict=True):
    if strict and not value > 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    if not strict and not value >= 0:
        raise ValueError(f"{name} must be >= 0, got {value}")
    return value
