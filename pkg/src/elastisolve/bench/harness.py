"""Running benchmark cases and sweeps."""

from __future__ import annotations

import dataclasses
import time

import numpy as np

from ..exceptions import SetupError
from ..nonlinear import DEFAULT_KINDS, NonlinearConfig, canonical_kind, solve
from .config import nonlinear_config
from .cases import build_mesh, build_preconditioner, build_problem
from .records import RunRecord

SWEEP_AXES = ("size", "param", "threads")

# exceptions a solve may raise that count as a recorded failure, not a harness error
_RECORDED = (SetupError, ArithmeticError, np.linalg.LinAlgError, RuntimeError)


def run_case(spec, solver_kind, config=None, keep_solution=False):
    """Build and solve one case; failures are recorded in the status field.

    The reported time covers problem setup, assembly and the solves, but not
    mesh generation. For the heartbeat, nit and lit are averages over the
    time steps and the run stops at the first failed step.
    """
    kind = canonical_kind(solver_kind)
    if config is None:
        config = NonlinearConfig(solver_kind=kind, threads=spec.threads)
    else:
        config = dataclasses.replace(config, solver_kind=kind, threads=spec.threads)
    mesh = build_mesh(spec)
    start = time.perf_counter()
    problem = build_problem(spec, mesh)
    pc = build_preconditioner(spec)
    steps = spec.time_steps if spec.case == "heartbeat" else 1
    reports, status, x = [], "converged", None
    for _ in range(steps):
        try:
            x, rep = solve(problem, config, preconditioner=pc)
        except _RECORDED as exc:
            status = f"error:{type(exc).__name__}"
            break
        reports.append(rep)
        if not rep.converged:
            status = rep.status
            break
        if spec.case == "heartbeat":
            problem.advance(x)
    t_sol = time.perf_counter() - start
    n = max(len(reports), 1)
    nit = sum(r.nit for r in reports) / n
    lit = sum(r.avg_linear_iterations for r in reports) / n
    if steps == 1:
        nit = int(nit)
    extra = {
        "jacobian_assemblies": [r.jacobian_assemblies for r in reports],
        "nits": [r.nit for r in reports],
        "reports": reports,
    }
    if keep_solution:
        extra["solution"] = x
        extra["problem"] = problem
    return RunRecord(case=spec.case, dofs=int(problem.n_dofs), solver=kind, param=float(spec.param),
                     threads=int(spec.threads), nit=nit, lit=float(lit), t_sol=float(t_sol),
                     status=status, histories=[list(r.residual_history) for r in reports], extra=extra)


def sweep(base_spec, axis, values, solvers=DEFAULT_KINDS, options=None, callback=None):
    """One RunRecord per (value, solver), varying ``axis`` of ``base_spec``.

    ``options`` are configuration-file options applied to every run;
    ``callback(record)`` is invoked after each run.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}")
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    field = {"size": "refinement", "param": "param", "threads": "threads"}[axis]
    records = []
    for v in values:
        spec = dataclasses.replace(base_spec, **{field: float(v) if field == "param" else int(v)})
        for s in solvers:
            rec = run_case(spec, s, nonlinear_config(options or {}, canonical_kind(s), spec.threads))
            records.append(rec)
            if callback is not None:
                callback(rec)
    return records
