"""Nonlinear drivers: Newton-Krylov, inexact Newton-Krylov and limited-memory BFGS.

All drivers expect a problem object exposing ``n_dofs``, ``residual(x)``,
``tangent(x, residual)`` returning the Dirichlet-eliminated Newton system
``(K, -R)``, ``initial_guess()`` and a ``jacobian_assemblies`` counter, as
provided by :class:`elastisolve.assembly.ElasticityProblem`. No globalization
is performed; every update is a full step.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, clone

from .exceptions import BreakdownError, DegenerateFiberError, NonPhysicalStateError
from .linalg.krylov import KrylovConfig, gmres
from .linalg.preconditioners import BlockJacobi, SchurFieldSplit, SmoothedAggregationAMG
from .linalg.sparse import BlockOperator

SOLVER_KINDS = ("NK", "iNK", "B", "iB", "newton-preonly", "quasiExactBFGS")
DEFAULT_KINDS = ("NK", "iNK", "B", "iB")

# command-line and configuration spellings
SOLVER_ALIASES = {
    "newton": "NK",
    "nk": "NK",
    "inexact-newton": "iNK",
    "ink": "iNK",
    "bfgs": "B",
    "bfgs-preonly": "B",
    "b": "B",
    "inexact-bfgs": "iB",
    "ib": "iB",
    "newton-preonly": "newton-preonly",
    "quasi-exact-bfgs": "quasiExactBFGS",
    "quasiexactbfgs": "quasiExactBFGS",
}

_STEP_ERRORS = (NonPhysicalStateError, DegenerateFiberError, BreakdownError, FloatingPointError)


def canonical_kind(name):
    """Map a solver name or alias to one of SOLVER_KINDS."""
    if name in SOLVER_KINDS:
        return name
    try:
        return SOLVER_ALIASES[str(name).lower()]
    except KeyError:
        raise ValueError(f"unknown solver kind {name!r}") from None


@dataclass(frozen=True)
class NonlinearConfig:
    """Solver selection and tolerances.

    ``exact_linear`` is used by Newton and the quasi-exact BFGS initial
    Hessian, ``inexact_linear`` by the inexact BFGS initial Hessian; inexact
    Newton takes its relative tolerance from the forcing term and uses a zero
    absolute tolerance.
    """

    solver_kind: str = "NK"
    atol: float = 1e-10
    rtol: float = 1e-8
    max_iterations: int = 1000
    exact_linear: KrylovConfig = field(default_factory=lambda: KrylovConfig(atol=1e-10, rtol=1e-6))
    inexact_linear: KrylovConfig = field(default_factory=lambda: KrylovConfig(atol=0.0, rtol=1e-2))
    ew_initial: float = 0.1
    ew_max: float = 0.1
    ew_floor: float = 1e-6
    lbfgs_memory: int = 50
    line_search: str = "basic"
    divergence_factor: float = 1e4
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "solver_kind", canonical_kind(self.solver_kind))
        if self.atol < 0 or self.rtol < 0:
            raise ValueError("tolerances must be non-negative")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if not 0 < self.ew_floor <= self.ew_max < 1 or not 0 < self.ew_initial < 1:
            raise ValueError("need 0 < ew_floor <= ew_max < 1 and 0 < ew_initial < 1")
        if self.lbfgs_memory < 1:
            raise ValueError("lbfgs_memory must be positive")
        if self.line_search != "basic":
            raise ValueError("only the full-step ('basic') line search is supported")


@dataclass
class SolveReport:
    """Outcome of one nonlinear solve."""

    status: str
    nit: int
    residual_history: list
    linear_iterations: list
    wall_time: float
    jacobian_assemblies: int = 0
    skipped_updates: int = 0
    forcing_terms: list = field(default_factory=list)
    message: str = ""

    @property
    def total_linear_iterations(self):
        return int(sum(self.linear_iterations))

    @property
    def avg_linear_iterations(self):
        return self.total_linear_iterations / self.nit if self.nit > 0 else 0.0

    @property
    def converged(self):
        return self.status == "converged"


def convergence_check(residual_norm, initial_norm, config):
    """Return 'converged', 'diverged' or 'continue'."""
    if not np.isfinite(residual_norm):
        return "diverged"
    if residual_norm <= max(config.atol, config.rtol * initial_norm):
        return "converged"
    if residual_norm > config.divergence_factor * initial_norm:
        return "diverged"
    return "continue"


def ew_tolerance(prev_residual_norm, prev_linear_model_norm, eta_prev, config, residual_norm=None):
    """Eisenstat-Walker forcing term (choice 1), clamped to [ew_floor, ew_max].

    eta = | ||R_k|| - ||R_{k-1} + J_{k-1} s_{k-1}|| | / ||R_{k-1}||

    ``residual_norm`` is ||R_k||; when omitted the previous residual norm is
    used in its place. ``eta_prev`` is accepted for interface symmetry with
    safeguarded variants and does not enter the formula.
    """
    if not prev_residual_norm > 0:
        raise ValueError("previous residual norm must be positive")
    current = prev_residual_norm if residual_norm is None else residual_norm
    eta = abs(current - prev_linear_model_norm) / prev_residual_norm
    return float(min(max(eta, config.ew_floor), config.ew_max))


class LbfgsHistory:
    """Ring buffer of curvature pairs (s, y, rho = 1 / <s, y>)."""

    def __init__(self, capacity=50):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.pairs = deque(maxlen=self.capacity)
        self.skipped = 0

    def __len__(self):
        return len(self.pairs)

    @property
    def rho(self):
        return [r for _, _, r in self.pairs]


def lbfgs_update(history, s, y):
    """Store (s, y) when <s, y> > 1e-12 |s| |y|, otherwise count a skipped update."""
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if s.shape != y.shape:
        raise ValueError("s and y must have the same shape")
    sy = float(s @ y)
    if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y) and sy > 0:
        history.pairs.append((s.copy(), y.copy(), 1.0 / sy))
    else:
        history.skipped += 1
    return history


def lbfgs_apply(history, apply_b0, g):
    """Two-loop recursion: action of the updated inverse Hessian on ``g``."""
    q = np.array(g, dtype=np.float64)
    alphas = []
    for s, y, rho in reversed(history.pairs):
        a = rho * float(s @ q)
        q -= a * y
        alphas.append(a)
    r = np.array(apply_b0(q), dtype=np.float64)
    for (s, y, rho), a in zip(history.pairs, reversed(alphas)):
        b = rho * float(y @ r)
        r += (a - b) * s
    return r


def default_preconditioner(matrix, block_size=3):
    """AMG for displacement systems, lower Schur fieldsplit with SIMPLE for saddle points.

    The multigrid uses Chebyshev smoothing here; see SmoothedAggregationAMG.
    """
    amg = SmoothedAggregationAMG(block_size=block_size, smoother="chebyshev")
    if isinstance(matrix, BlockOperator):
        return SchurFieldSplit(variant="lower", schur_approx="SIMPLE",
                               inner_a=amg, inner_s=BlockJacobi(block_size=1))
    return amg


class _Run:
    """Book-keeping shared by the drivers."""

    def __init__(self, problem, config):
        self.problem = problem
        self.config = config
        self.start = time.perf_counter()
        self.assemblies0 = getattr(problem, "jacobian_assemblies", 0)
        self.history = []
        self.lits = []
        self.etas = []

    def report(self, status, skipped=0, message=""):
        wall = max(time.perf_counter() - self.start, np.finfo(float).tiny)
        return SolveReport(status=status, nit=len(self.lits), residual_history=self.history,
                           linear_iterations=self.lits, wall_time=wall,
                           jacobian_assemblies=getattr(self.problem, "jacobian_assemblies", 0) - self.assemblies0,
                           skipped_updates=skipped, forcing_terms=self.etas, message=message)


def _fit_preconditioner(preconditioner, K, problem):
    pc = preconditioner if preconditioner is not None else default_preconditioner(
        K, getattr(problem, "block_size", 3))
    nullspace = problem.near_nullspace() if hasattr(problem, "near_nullspace") else None
    return clone(pc).fit(K, near_nullspace=nullspace)


def _start(problem, x0):
    x = problem.initial_guess() if x0 is None else np.array(x0, dtype=np.float64)
    if x.shape != (problem.n_dofs,):
        raise ValueError(f"initial guess must have shape ({problem.n_dofs},)")
    return x


def solve_newton(problem, config=None, x0=None, preconditioner=None, inexact=False):
    """Newton-Krylov iteration with full steps.

    Returns ``(x, SolveReport)``. ``inexact=True`` selects the Eisenstat-Walker
    forcing term for the inner tolerance; ``config.solver_kind ==
    'newton-preonly'`` replaces the inner solve by one preconditioner application.
    """
    config = config or NonlinearConfig()
    run = _Run(problem, config)
    preonly = config.solver_kind == "newton-preonly"
    x = _start(problem, x0)
    try:
        R = problem.residual(x)
    except _STEP_ERRORS as exc:
        return x, run.report("stepFailure", message=str(exc))
    r0 = float(np.linalg.norm(R))
    run.history.append(r0)
    status = convergence_check(r0, r0, config)
    eta, prev_norm, lin_norm = config.ew_initial, None, None
    while status == "continue":
        if len(run.lits) >= config.max_iterations:
            status = "maxIts"
            break
        rk = run.history[-1]
        try:
            K, rhs = problem.tangent(x, R)
            pc = _fit_preconditioner(preconditioner, K, problem)
            if preonly:
                dx, lit = pc.apply(rhs), 0
            else:
                if inexact:
                    if prev_norm is not None:
                        eta = ew_tolerance(prev_norm, lin_norm, eta, config, residual_norm=rk)
                    run.etas.append(eta)
                    kc = replace(config.exact_linear, atol=0.0, rtol=eta)
                else:
                    kc = config.exact_linear
                res = gmres(K, rhs, pc, kc, threads=config.threads)
                dx, lit = res.x, res.iterations
                lin_norm = res.residual_history[-1]
            prev_norm = rk
            run.lits.append(lit)
            x = x + dx
            R = problem.residual(x)
        except _STEP_ERRORS as exc:
            if len(run.lits) < len(run.history):
                run.lits.append(0)
            run.history.append(float("nan"))
            return x, run.report("stepFailure", message=str(exc))
        rn = float(np.linalg.norm(R))
        run.history.append(rn)
        status = convergence_check(rn, r0, config)
    return x, run.report(status)


def solve_inexact_newton(problem, config=None, x0=None, preconditioner=None):
    """Newton-Krylov with Eisenstat-Walker relative tolerances and zero absolute tolerance."""
    return solve_newton(problem, config, x0, preconditioner, inexact=True)


def solve_bfgs(problem, config=None, b0_mode="preonly", x0=None, preconditioner=None):
    """Limited-memory BFGS on the residual with a Jacobian-based initial inverse Hessian.

    The Jacobian is assembled once, at the initial guess. ``b0_mode`` selects
    the action of the initial inverse: ``'preonly'`` applies the preconditioner
    built from it, ``'inexact'`` and ``'quasiExact'`` run preconditioned GMRES
    with the inexact or exact linear tolerances.
    """
    config = config or NonlinearConfig()
    if b0_mode not in ("preonly", "inexact", "quasiExact"):
        raise ValueError("b0_mode must be 'preonly', 'inexact' or 'quasiExact'")
    run = _Run(problem, config)
    hist = LbfgsHistory(config.lbfgs_memory)
    x = _start(problem, x0)
    try:
        R = problem.residual(x)
    except _STEP_ERRORS as exc:
        return x, run.report("stepFailure", message=str(exc))
    r0 = float(np.linalg.norm(R))
    run.history.append(r0)
    status = convergence_check(r0, r0, config)
    if status != "continue":
        return x, run.report(status)
    try:
        K, _ = problem.tangent(x, R)
        pc = _fit_preconditioner(preconditioner, K, problem)
    except _STEP_ERRORS as exc:
        return x, run.report("stepFailure", message=str(exc))
    kc = config.inexact_linear if b0_mode == "inexact" else config.exact_linear
    counter = [0]

    def apply_b0(v):
        if b0_mode == "preonly":
            return pc.apply(v)
        res = gmres(K, v, pc, kc, threads=config.threads)
        counter[0] += res.iterations
        return res.x

    while status == "continue":
        if len(run.lits) >= config.max_iterations:
            status = "maxIts"
            break
        counter[0] = 0
        try:
            step = -lbfgs_apply(hist, apply_b0, R)
            run.lits.append(counter[0])
            x = x + step
            R_new = problem.residual(x)
        except _STEP_ERRORS as exc:
            if len(run.lits) < len(run.history):
                run.lits.append(counter[0])
            run.history.append(float("nan"))
            return x, run.report("stepFailure", hist.skipped, str(exc))
        lbfgs_update(hist, step, R_new - R)
        R = R_new
        rn = float(np.linalg.norm(R))
        run.history.append(rn)
        status = convergence_check(rn, r0, config)
    return x, run.report(status, hist.skipped)


def solve(problem, config=None, x0=None, preconditioner=None):
    """Dispatch on ``config.solver_kind``."""
    config = config or NonlinearConfig()
    kind = config.solver_kind
    if kind in ("NK", "newton-preonly"):
        return solve_newton(problem, config, x0, preconditioner)
    if kind == "iNK":
        return solve_inexact_newton(problem, config, x0, preconditioner)
    mode = {"B": "preonly", "iB": "inexact", "quasiExactBFGS": "quasiExact"}[kind]
    return solve_bfgs(problem, config, mode, x0, preconditioner)


def observed_order(residual_history):
    """Convergence order over the last step from residuals normalized by the first.

    Returns log(e_{k+1}) / log(e_k) with e = ||R|| / ||R_0||.
    """
    h = np.asarray(residual_history, dtype=np.float64)
    if len(h) < 3:
        raise ValueError("need at least two steps")
    e = h / h[0]
    return float(np.log(e[-1]) / np.log(e[-2]))


class NonlinearSolver(BaseEstimator):
    """Estimator wrapper around the drivers.

    ``fit(problem)`` solves the problem and stores ``solution_`` and
    ``report_``. ``linear_rtol``/``linear_atol`` override the quasi-exact
    inner tolerances.
    """

    def __init__(self, solver_kind="NK", preconditioner=None, rtol=1e-8, atol=1e-10,
                 max_iterations=1000, linear_rtol=1e-6, linear_atol=1e-10,
                 inexact_rtol=1e-2, ew_initial=0.1, ew_max=0.1, ew_floor=1e-6,
                 lbfgs_memory=50, threads=1):
        self.solver_kind = solver_kind
        self.preconditioner = preconditioner
        self.rtol = rtol
        self.atol = atol
        self.max_iterations = max_iterations
        self.linear_rtol = linear_rtol
        self.linear_atol = linear_atol
        self.inexact_rtol = inexact_rtol
        self.ew_initial = ew_initial
        self.ew_max = ew_max
        self.ew_floor = ew_floor
        self.lbfgs_memory = lbfgs_memory
        self.threads = threads

    def make_config(self):
        return NonlinearConfig(
            solver_kind=self.solver_kind, atol=self.atol, rtol=self.rtol,
            max_iterations=self.max_iterations,
            exact_linear=KrylovConfig(atol=self.linear_atol, rtol=self.linear_rtol),
            inexact_linear=KrylovConfig(atol=0.0, rtol=self.inexact_rtol),
            ew_initial=self.ew_initial, ew_max=self.ew_max, ew_floor=self.ew_floor,
            lbfgs_memory=self.lbfgs_memory, threads=self.threads)

    def fit(self, problem, x0=None):
        self.config_ = self.make_config()
        self.solution_, self.report_ = solve(problem, self.config_, x0, self.preconditioner)
        return self
