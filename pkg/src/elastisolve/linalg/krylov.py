"""Unrestarted GMRES with modified Gram-Schmidt and right preconditioning."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..exceptions import BreakdownError
from .sparse import as_operator

BREAKDOWN_TOL = 1e-30


@dataclass(frozen=True)
class KrylovConfig:
    atol: float = 1e-10
    rtol: float = 1e-6
    max_iterations: int = 2000

    def __post_init__(self):
        if self.atol < 0 or self.rtol < 0:
            raise ValueError("tolerances must be non-negative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


class GmresResult(NamedTuple):
    x: np.ndarray
    iterations: int
    residual_history: list
    converged: bool


def _givens(a, b):
    if b == 0.0:
        return 1.0, 0.0
    r = np.hypot(a, b)
    return a / r, b / r


def gmres(operator, b, M=None, config=KrylovConfig(), x0=None, threads=1):
    """Solve ``operator x = b``.

    Right preconditioning keeps the monitored residual equal to the true
    residual ``||b - A x||``; iteration stops once it is at most
    ``max(atol, rtol * ||b||)``. Preconditioned directions are stored, so a
    preconditioner that varies between applications is also handled.

    Returns a GmresResult; hitting ``max_iterations`` is reported through
    ``converged=False``, not an exception. A BreakdownError is raised when the
    Hessenberg matrix becomes singular or the Arnoldi process stalls before
    the tolerance is met.
    """
    A = as_operator(operator, threads)
    if M is None:
        apply_M = lambda v: v  # noqa: E731
    elif hasattr(M, "apply"):
        apply_M = M.apply
    else:
        apply_M = M
    b = np.asarray(b, dtype=np.float64)
    n = b.shape[0]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - A(x) if x0 is not None else b.copy()
    beta = float(np.linalg.norm(r))
    tol = max(config.atol, config.rtol * float(np.linalg.norm(b)))
    history = [beta]
    if beta <= tol:
        return GmresResult(x, 0, history, True)
    m = config.max_iterations
    V = [r / beta]
    Z = []
    H = np.zeros((m + 1, m))
    cs = np.zeros(m)
    sn = np.zeros(m)
    g = np.zeros(m + 1)
    g[0] = beta
    converged = False
    k = 0
    for j in range(m):
        z = apply_M(V[j])
        Z.append(z)
        w = A(z)
        for i in range(j + 1):
            h = float(np.dot(w, V[i]))
            H[i, j] = h
            w -= h * V[i]
        hn = float(np.linalg.norm(w))
        H[j + 1, j] = hn
        for i in range(j):
            t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j] = t
        cs[j], sn[j] = _givens(H[j, j], H[j + 1, j])
        H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
        H[j + 1, j] = 0.0
        if abs(H[j, j]) < BREAKDOWN_TOL:
            raise BreakdownError(f"singular Hessenberg matrix at iteration {j + 1}")
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        res = abs(g[j + 1])
        history.append(res)
        k = j + 1
        if res <= tol:
            converged = True
            break
        if hn < BREAKDOWN_TOL:
            raise BreakdownError(f"Arnoldi breakdown at iteration {k} with residual {res:.3e}")
        V.append(w / hn)
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        y[i] = (g[i] - H[i, i + 1:k] @ y[i + 1:]) / H[i, i]
    for i in range(k):
        x += y[i] * Z[i]
    return GmresResult(x, k, history, converged)
