"""Preconditioners as fit/apply estimators.

Each class follows the scikit-learn estimator protocol: hyper-parameters are
constructor arguments (``get_params``/``set_params``/``clone`` work), ``fit``
performs the setup on an operator and returns ``self``, and ``apply`` (alias
``transform``) returns the approximate inverse action ``z ~ A^{-1} r``.

``fit`` also accepts an optional ``near_nullspace`` (n x k array of vectors
the operator nearly annihilates, e.g. rigid body modes). Only the multigrid
uses it; composite preconditioners pass it on to their primal-block solver.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from sklearn.base import BaseEstimator, clone
from sklearn.exceptions import NotFittedError

from .._validation import check_square_csr, check_vector
from ..exceptions import SetupError
from .krylov import KrylovConfig, gmres
from .sparse import BlockOperator


class Preconditioner(BaseEstimator):
    """Base class: subclasses implement ``fit`` and ``_apply``."""

    def _check_fitted(self):
        if not getattr(self, "fitted_", False):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet; call fit first")

    def apply(self, r):
        self._check_fitted()
        return self._apply(check_vector(r, self.n_, "r"))

    def transform(self, r):
        return self.apply(r)

    def __call__(self, r):
        return self.apply(r)


class IdentityPreconditioner(Preconditioner):
    def fit(self, A, near_nullspace=None):
        self.n_ = A.shape[0]
        self.fitted_ = True
        return self

    def _apply(self, r):
        return r.copy()


class Jacobi(Preconditioner):
    """Inverse of the matrix diagonal."""

    def fit(self, A, near_nullspace=None):
        A = check_square_csr(A)
        d = A.diagonal()
        if np.any(d == 0):
            raise SetupError("zero on the diagonal")
        self.inv_diag_ = 1.0 / d
        self.n_ = A.shape[0]
        self.fitted_ = True
        return self

    def _apply(self, r):
        return self.inv_diag_ * r


class BlockJacobi(Preconditioner):
    """Inverse of the point-block diagonal (``block_size`` x ``block_size`` blocks)."""

    def __init__(self, block_size=3):
        self.block_size = block_size

    def fit(self, A, near_nullspace=None):
        A = check_square_csr(A)
        b = self.block_size
        n = A.shape[0]
        if n % b:
            raise SetupError(f"block size {b} does not divide dimension {n}")
        coo = A.tocoo()
        keep = coo.row // b == coo.col // b
        blocks = np.zeros((n // b, b, b))
        np.add.at(blocks, (coo.row[keep] // b, coo.row[keep] % b, coo.col[keep] % b), coo.data[keep])
        try:
            inv = np.linalg.inv(blocks)
        except np.linalg.LinAlgError as exc:
            raise SetupError("singular diagonal block") from exc
        if not np.all(np.isfinite(inv)):
            raise SetupError("singular diagonal block")
        self.inv_blocks_ = inv
        self.n_ = n
        self.fitted_ = True
        return self

    def _apply(self, r):
        b = self.block_size
        return np.einsum("nij,nj->ni", self.inv_blocks_, r.reshape(-1, b)).ravel()


class DirectSolver(Preconditioner):
    """Exact inverse via sparse LU; the 'exact' inner solver for small problems."""

    def fit(self, A, near_nullspace=None):
        A = check_square_csr(A).tocsc()
        try:
            self.lu_ = spla.splu(A)
        except RuntimeError as exc:
            raise SetupError(f"LU factorization failed: {exc}") from exc
        self.n_ = A.shape[0]
        self.fitted_ = True
        return self

    def _apply(self, r):
        return self.lu_.solve(r)


class KrylovSolver(Preconditioner):
    """Preconditioned GMRES used as an (inexact, nonlinear) inverse action.

    ``last_iterations_`` records the GMRES count of the most recent apply.
    """

    def __init__(self, preconditioner=None, rtol=1e-2, atol=0.0, max_iterations=2000, threads=1):
        self.preconditioner = preconditioner
        self.rtol = rtol
        self.atol = atol
        self.max_iterations = max_iterations
        self.threads = threads

    def fit(self, A, near_nullspace=None):
        self.operator_ = A
        pc = self.preconditioner if self.preconditioner is not None else IdentityPreconditioner()
        self.pc_ = clone(pc).fit(A, near_nullspace=near_nullspace)
        self.n_ = A.shape[0]
        self.last_iterations_ = 0
        self.fitted_ = True
        return self

    def _apply(self, r):
        cfg = KrylovConfig(self.atol, self.rtol, self.max_iterations)
        res = gmres(self.operator_, r, self.pc_, cfg, threads=self.threads)
        self.last_iterations_ = res.iterations
        return res.x


def _amalgamate(A, b):
    """Node-level matrix of Frobenius norms of the b x b blocks."""
    if b == 1:
        return abs(A)
    coo = A.tocoo()
    N = sp.coo_matrix((coo.data ** 2, (coo.row // b, coo.col // b)), shape=(A.shape[0] // b,) * 2).tocsr()
    N.sum_duplicates()
    N.data = np.sqrt(N.data)
    return N


def _strength_graph(A, b, theta):
    N = _amalgamate(A, b).tocoo()
    d = np.abs(N.diagonal())
    off = N.row != N.col
    denom = np.sqrt(d[N.row] * d[N.col])
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > 0, np.abs(N.data) / denom, 0.0)
    strong = off & (s >= theta) & (N.data != 0)
    S = sp.csr_matrix((np.ones(strong.sum()), (N.row[strong], N.col[strong])), shape=N.shape)
    S = ((S + S.T) > 0).astype(np.int8).tocsr()
    S.sort_indices()
    return S


def _aggregate(S):
    """Greedy three-pass aggregation; isolated nodes get -1."""
    n = S.shape[0]
    indptr, indices = S.indptr.tolist(), S.indices.tolist()
    agg = [-1] * n
    count = 0
    for i in range(n):
        nb = indices[indptr[i]:indptr[i + 1]]
        if agg[i] == -1 and nb and all(agg[j] == -1 for j in nb):
            agg[i] = count
            for j in nb:
                agg[j] = count
            count += 1
    first = list(agg)
    for i in range(n):
        if agg[i] == -1:
            for j in indices[indptr[i]:indptr[i + 1]]:
                if first[j] != -1:
                    agg[i] = first[j]
                    break
    for i in range(n):
        nb = indices[indptr[i]:indptr[i + 1]]
        if agg[i] == -1 and nb:
            agg[i] = count
            for j in nb:
                if agg[j] == -1:
                    agg[j] = count
            count += 1
    return np.array(agg), count


def _spectral_radius_dinv_a(A, dinv, iters=15):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(A.shape[0])
    lam = 0.0
    for _ in range(iters):
        y = dinv * (A @ x)
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return 0.0
        lam = nrm / np.linalg.norm(x)
        x = y / nrm
    return lam


def _chebyshev(A, dinv, rho, x, b, degree):
    # three-term Chebyshev recurrence for D^{-1} A on [0.1, 1.1] * rho
    hi, lo = 1.1 * rho, 0.1 * rho
    theta, delta = 0.5 * (hi + lo), 0.5 * (hi - lo)
    sigma = theta / delta
    rho_k = 1.0 / sigma
    r = dinv * (b - A @ x)
    d = r / theta
    x = x + d
    for _ in range(1, degree):
        rho_next = 1.0 / (2.0 * sigma - rho_k)
        r = r - dinv * (A @ d)
        d = rho_next * rho_k * d + 2.0 * rho_next / delta * r
        x = x + d
        rho_k = rho_next
    return x


def _tentative_constant(agg, count, b, n):
    # one normalized constant per component and aggregate
    nodes = np.flatnonzero(agg >= 0)
    sizes = np.bincount(agg[nodes], minlength=count)
    rows = (nodes[:, None] * b + np.arange(b)).ravel()
    cols = (agg[nodes][:, None] * b + np.arange(b)).ravel()
    vals = np.repeat(1.0 / np.sqrt(sizes[agg[nodes]]), b)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, count * b))


def _tentative_fitted(agg, count, b, B):
    """Orthonormalize the near-nullspace restricted to each aggregate.

    Returns the tentative prolongator and the coarse near-nullspace (the R
    factors). Directions that vanish on an aggregate give zero columns.
    """
    n, k = B.shape
    nodes = np.flatnonzero(agg >= 0)
    order = nodes[np.argsort(agg[nodes], kind="stable")]
    bounds = np.searchsorted(agg[order], np.arange(count + 1))
    rows, cols, vals = [], [], []
    Bc = np.zeros((count * k, k))
    scale = np.max(np.abs(B)) if B.size else 1.0
    for a in range(count):
        members = order[bounds[a]:bounds[a + 1]]
        dofs = (members[:, None] * b + np.arange(b)).ravel()
        Q, R = np.linalg.qr(B[dofs], mode="reduced")
        r = Q.shape[1]
        keep = np.abs(np.diag(R)) > 1e-10 * scale
        Q = Q * keep
        R = R * keep[:, None]
        rows.append(np.repeat(dofs, r))
        cols.append(np.tile(a * k + np.arange(r), len(dofs)))
        vals.append(Q.ravel())
        Bc[a * k:a * k + r] = R
    T = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, count * k))
    T.eliminate_zeros()
    return T, Bc


class SmoothedAggregationAMG(Preconditioner):
    """Smoothed-aggregation algebraic multigrid V-cycle.

    Parameters
    ----------
    block_size : int
        Unknowns per node; aggregation runs on the node graph and the
        tentative prolongator carries one constant vector per component.
    strength_threshold : float
        Symmetric strength cut-off |a_ij| / sqrt(a_ii a_jj).
    omega : float
        Damped-Jacobi weight for prolongator smoothing and the smoother; it is
        scaled by ``min(1, 2 / rho(D^{-1} A))`` so it stays convergent when the
        spectrum exceeds that of a Laplacian.
    max_coarse : int
        Rows at which the hierarchy stops and a dense LU is used.
    max_levels : int
    presmooth, postsmooth : int
        Smoother applications before and after the coarse correction.
    smoother : {"jacobi", "chebyshev"}
        Damped Jacobi, or a Chebyshev polynomial in D^{-1} A of degree
        ``chebyshev_degree`` targeting [0.1, 1.1] times the estimated largest
        eigenvalue.

    Notes
    -----
    Without a near-nullspace the tentative prolongator is piecewise constant
    per component. With one (passed to ``fit``), it is orthonormalized per
    aggregate and coarse levels carry ``k`` unknowns per aggregate.
    """

    def __init__(self, block_size=1, strength_threshold=0.08, omega=2.0 / 3.0, max_coarse=500,
                 max_levels=10, presmooth=1, postsmooth=1, smoother="jacobi", chebyshev_degree=3):
        self.block_size = block_size
        self.strength_threshold = strength_threshold
        self.omega = omega
        self.max_coarse = max_coarse
        self.max_levels = max_levels
        self.presmooth = presmooth
        self.postsmooth = postsmooth
        self.smoother = smoother
        self.chebyshev_degree = chebyshev_degree

    def fit(self, A, near_nullspace=None):
        A = check_square_csr(A)
        b = self.block_size
        if self.smoother not in ("jacobi", "chebyshev"):
            raise ValueError(f"unknown smoother {self.smoother!r}")
        if A.shape[0] % b:
            raise SetupError(f"block size {b} does not divide dimension {A.shape[0]}")
        if near_nullspace is not None:
            B = np.asarray(near_nullspace, dtype=np.float64)
            if B.ndim != 2 or B.shape[0] != A.shape[0]:
                raise SetupError("near_nullspace must have shape (n, k)")
        else:
            B = None
        levels = []
        while True:
            n = A.shape[0]
            d = A.diagonal()
            if np.any(d == 0):
                raise SetupError("zero diagonal entry; operator is structurally singular")
            dinv = 1.0 / d
            rho = _spectral_radius_dinv_a(A, dinv)
            w = self.omega * min(1.0, 2.0 / rho) if rho > 0 else self.omega
            level = {"A": A, "dinv": dinv, "omega": w, "rho": rho}
            levels.append(level)
            if n <= self.max_coarse or len(levels) == self.max_levels:
                break
            S = _strength_graph(A, b, self.strength_threshold)
            agg, count = _aggregate(S)
            k = b if B is None else B.shape[1]
            nc = count * k
            if count == 0 or nc >= n:
                break
            if B is None:
                T = _tentative_constant(agg, count, b, n)
            else:
                T, B = _tentative_fitted(agg, count, b, B)
            P = (T - w * sp.diags(dinv) @ (A @ T)).tocsr()
            level["P"] = P
            level["R"] = P.T.tocsr()
            A = (level["R"] @ A @ P).tocsr()
            # coarse unknowns from rank-deficient aggregates are decoupled
            dead = np.flatnonzero(A.diagonal() == 0)
            if dead.size:
                unit = np.zeros(A.shape[0])
                unit[dead] = 1.0
                A = (A + sp.diags(unit)).tocsr()
            A.sort_indices()
            b = k
        last = levels[-1]
        if last["A"].shape[0] <= self.max_coarse:
            dense = last["A"].toarray()
            lu, piv = sla.lu_factor(dense, check_finite=False)
            if np.any(np.abs(np.diag(lu)) <= 1e-14 * np.max(np.abs(np.diag(lu)))):
                raise SetupError("coarsest operator is singular")
            last["lu"] = (lu, piv)
        self.levels_ = levels
        self.n_ = levels[0]["A"].shape[0]
        self.fitted_ = True
        return self

    @property
    def n_levels_(self):
        return len(self.levels_)

    def _smooth(self, lev, x, b, sweeps):
        if self.smoother == "chebyshev":
            for _ in range(sweeps):
                x = _chebyshev(lev["A"], lev["dinv"], lev["rho"], x, b, self.chebyshev_degree)
            return x
        for _ in range(sweeps):
            x = x + lev["omega"] * lev["dinv"] * (b - lev["A"] @ x)
        return x

    def _cycle(self, k, b):
        lev = self.levels_[k]
        if "lu" in lev:
            return sla.lu_solve(lev["lu"], b, check_finite=False)
        x = self._smooth(lev, np.zeros_like(b), b, self.presmooth)
        if "P" in lev:
            xc = self._cycle(k + 1, lev["R"] @ (b - lev["A"] @ x))
            x = x + lev["P"] @ xc
        return self._smooth(lev, x, b, self.postsmooth)

    def _apply(self, r):
        return self._cycle(0, r)


class SchurFieldSplit(Preconditioner):
    """Block-factorization preconditioner for [[A, B1], [B2, C]].

    Parameters
    ----------
    variant : {"lower", "upper", "diag", "full"}
        Which factors of the block LDU factorization to apply. ``diag`` uses
        diag(A, -S), whose preconditioned spectrum has three points when C = 0.
    schur_approx : {"SIMPLE", "exact"}
        SIMPLE replaces A^{-1} with diag(A)^{-1} when forming S = C - B2 A^{-1} B1;
        ``exact`` forms S densely through LU solves (small problems only).
    inner_a, inner_s : Preconditioner
        Unfitted estimators cloned and fitted on A and on the Schur approximation.
    """

    def __init__(self, variant="lower", schur_approx="SIMPLE", inner_a=None, inner_s=None):
        self.variant = variant
        self.schur_approx = schur_approx
        self.inner_a = inner_a
        self.inner_s = inner_s

    def fit(self, op, near_nullspace=None):
        if not isinstance(op, BlockOperator):
            raise TypeError("SchurFieldSplit needs a BlockOperator")
        if self.variant not in ("lower", "upper", "diag", "full"):
            raise ValueError(f"unknown variant {self.variant!r}")
        A = check_square_csr(op.A)
        B1, B2 = sp.csr_matrix(op.B1), sp.csr_matrix(op.B2)
        m = B2.shape[0]
        C = sp.csr_matrix((m, m)) if op.C is None else sp.csr_matrix(op.C)
        if self.schur_approx == "SIMPLE":
            d = A.diagonal()
            if np.any(d == 0):
                raise SetupError("zero on the diagonal of A")
            S = (C - B2 @ sp.diags(1.0 / d) @ B1).tocsr()
        elif self.schur_approx == "exact":
            lu = DirectSolver().fit(A)
            AinvB1 = lu.lu_.solve(B1.toarray())
            S = sp.csr_matrix(C.toarray() - B2 @ AinvB1)
        else:
            raise ValueError(f"unknown Schur approximation {self.schur_approx!r}")
        S.eliminate_zeros()
        inner_a = self.inner_a if self.inner_a is not None else DirectSolver()
        inner_s = self.inner_s if self.inner_s is not None else DirectSolver()
        self.A_, self.B1_, self.B2_, self.S_ = A, B1, B2, S
        self.pa_ = clone(inner_a).fit(A, near_nullspace=near_nullspace)
        self.ps_ = clone(inner_s).fit(S)
        self.n_primal_ = A.shape[0]
        self.n_ = A.shape[0] + m
        self.fitted_ = True
        return self

    def _apply(self, r):
        n = self.n_primal_
        ru, rp = r[:n], r[n:]
        v = self.variant
        if v == "diag":
            return np.concatenate([self.pa_.apply(ru), -self.ps_.apply(rp)])
        if v == "upper":
            zp = self.ps_.apply(rp)
            zu = self.pa_.apply(ru - self.B1_ @ zp)
            return np.concatenate([zu, zp])
        yu = self.pa_.apply(ru)
        zp = self.ps_.apply(rp - self.B2_ @ yu)
        if v == "lower":
            return np.concatenate([yu, zp])
        zu = self.pa_.apply(ru - self.B1_ @ zp)
        return np.concatenate([zu, zp])


def make_jacobi(A):
    return Jacobi().fit(A)


def make_block_jacobi(A, block_size=3):
    return BlockJacobi(block_size).fit(A)


def make_amg(A, block_size=1, **kwargs):
    return SmoothedAggregationAMG(block_size=block_size, **kwargs).fit(A)


def make_schur_fieldsplit(op, variant="lower", schur_approx="SIMPLE", inner_a=None, inner_s=None):
    return SchurFieldSplit(variant, schur_approx, inner_a, inner_s).fit(op)

