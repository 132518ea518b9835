"""Benchmark case definitions: Cook membrane, incompressible twist and heartbeat."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..assembly import (BoundaryConditions, DirichletBC, DynamicState, ElasticityProblem,
                        NeumannBC, ProblemDefinition, RobinBC, rotation_displacement)
from ..linalg.preconditioners import (BlockJacobi, DirectSolver, Jacobi, SchurFieldSplit,
                                      SmoothedAggregationAMG)
from ..materials import ActivationParams, Guccione, NeoHookean, TwistMaterial, activation
from ..mesh import build_bar_mesh, build_cook_mesh, build_dof_map, build_ellipsoid_mesh

CASE_NAMES = ("cook", "twist", "heartbeat")

# traction tau, rotation angle (radians), peak activation C_PA
DEFAULT_PARAMS = {"cook": 1e6, "twist": np.pi / 6, "heartbeat": 1e4}


@dataclass(frozen=True)
class CaseSpec:
    """One benchmark configuration.

    Parameters
    ----------
    case : {"cook", "twist", "heartbeat"}
    refinement : int
        Mesh refinement level; 1 is the coarsest desk-scale mesh.
    order : {"P1", "P2"}
        Displacement order; the twist case always uses P2 with P0 pressure.
    param : float, optional
        Load parameter (defaults in DEFAULT_PARAMS).
    time_steps : int
        Newmark steps for the heartbeat; ignored by the static cases.
    threads : int
    options : dict
        Overrides for the preconditioner (see ``build_preconditioner``).
    """

    case: str
    refinement: int = 1
    order: str = "P1"
    param: float = None
    time_steps: int = 1
    threads: int = 1
    options: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.case not in CASE_NAMES:
            raise ValueError(f"unknown case {self.case!r}; expected one of {CASE_NAMES}")
        order = str(self.order).upper()
        if order not in ("P1", "P2"):
            raise ValueError("order must be P1 or P2")
        if self.case == "twist":
            order = "P2"
        object.__setattr__(self, "order", order)
        param = DEFAULT_PARAMS[self.case] if self.param is None else float(self.param)
        if not param > 0:
            raise ValueError("case parameter must be positive")
        object.__setattr__(self, "param", param)
        if int(self.refinement) < 1 or int(self.time_steps) < 1 or int(self.threads) < 1:
            raise ValueError("refinement, time_steps and threads must be positive")


def build_mesh(spec):
    r = int(spec.refinement)
    if spec.case == "cook":
        return build_cook_mesh(r)
    if spec.case == "twist":
        return build_bar_mesh(2 * r, 2 * r, 4 * r)
    return build_ellipsoid_mesh(refinement=r)


def build_problem(spec, mesh=None):
    """Assembler for ``spec``; ``mesh`` may be passed to reuse a generated mesh."""
    mesh = build_mesh(spec) if mesh is None else mesh
    V = build_dof_map(mesh, spec.order, 3)
    if spec.case == "cook":
        bcs = BoundaryConditions(dirichlet=(DirichletBC("clamped"),),
                                 neumann=(NeumannBC("loaded", (0.0, spec.param, 0.0)),))
        definition = ProblemDefinition(mesh, V, NeoHookean(), bcs)
    elif spec.case == "twist":
        bcs = BoundaryConditions(dirichlet=(
            DirichletBC("base"),
            DirichletBC("top", rotation_displacement(spec.param), (0, 1))))
        definition = ProblemDefinition(mesh, V, TwistMaterial(), bcs,
                                       pressure_space=build_dof_map(mesh, "P0", 1))
    else:
        params = ActivationParams(C_PA=spec.param)
        bcs = BoundaryConditions(robin=(RobinBC("epi"),))
        definition = ProblemDefinition(mesh, V, Guccione(), bcs,
                                       dynamic=DynamicState.at_rest(V.num_dofs),
                                       activation=lambda t: activation(t, params))
    return ElasticityProblem(definition, threads=spec.threads)


def _choice(opts, key, default, table):
    value = opts.get(key, default)
    if value not in table:
        raise ValueError(f"{key} must be one of {sorted(table)}, got {value!r}")
    return table[value]


def build_preconditioner(spec):
    """Unfitted preconditioner for the case.

    AMG with block size 3 for the displacement cases; lower Schur fieldsplit
    with the SIMPLE approximation, AMG on the displacement block and block
    Jacobi on the Schur block for the twist. ``spec.options`` may set
    ``pc_type`` (gamg, jacobi, bjacobi, lu), ``mg_levels_ksp_type``
    (chebyshev, richardson), ``pc_fieldsplit_schur_fact_type`` and
    ``pc_fieldsplit_schur_precondition`` (selfp, full).
    """
    opts = spec.options
    smoother = _choice(opts, "mg_levels_ksp_type", "chebyshev", {"chebyshev": "chebyshev", "richardson": "jacobi"})
    pc_type = opts.get("pc_type", "fieldsplit" if spec.case == "twist" else "gamg")
    single = {
        "gamg": SmoothedAggregationAMG(block_size=3, smoother=smoother),
        "jacobi": Jacobi(),
        "bjacobi": BlockJacobi(3),
        "lu": DirectSolver(),
    }
    if spec.case != "twist":
        if pc_type not in single:
            raise ValueError(f"pc_type {pc_type!r} is not available for {spec.case}")
        return single[pc_type]
    if pc_type != "fieldsplit":
        raise ValueError("the twist case needs pc_type fieldsplit")
    schur = _choice(opts, "pc_fieldsplit_schur_precondition", "selfp", {"selfp": "SIMPLE", "full": "exact"})
    variant = _choice(opts, "pc_fieldsplit_schur_fact_type", "lower",
                      {v: v for v in ("lower", "upper", "diag", "full")})
    return SchurFieldSplit(variant=variant,
                           schur_approx=schur, inner_a=single["gamg"], inner_s=BlockJacobi(1))
