"""Finite-element nonlinear elasticity with Newton-Krylov and quasi-Newton solvers."""

from .assembly import (BoundaryConditions, DirichletBC, DynamicState, ElasticityProblem, NeumannBC,
                       ProblemDefinition, RobinBC, apply_dirichlet, assemble_energy, assemble_jacobian,
                       assemble_residual, newmark_advance, rotation_displacement)
from .exceptions import BreakdownError, DegenerateFiberError, NonPhysicalStateError, SetupError
from .materials import Guccione, NeoHookean, TwistMaterial
from .mesh import build_bar_mesh, build_cook_mesh, build_dof_map, build_ellipsoid_mesh, fiber_field, write_vtk
from .nonlinear import (NonlinearConfig, NonlinearSolver, SolveReport, solve, solve_bfgs,
                        solve_inexact_newton, solve_newton)

__version__ = "0.1.0"

__all__ = [
    "BoundaryConditions", "DirichletBC", "DynamicState", "ElasticityProblem", "NeumannBC",
    "ProblemDefinition", "RobinBC", "apply_dirichlet", "assemble_energy", "assemble_jacobian",
    "assemble_residual", "newmark_advance", "rotation_displacement",
    "BreakdownError", "DegenerateFiberError", "NonPhysicalStateError", "SetupError",
    "Guccione", "NeoHookean", "TwistMaterial",
    "build_bar_mesh", "build_cook_mesh", "build_dof_map", "build_ellipsoid_mesh", "fiber_field", "write_vtk",
    "NonlinearConfig", "NonlinearSolver", "SolveReport", "solve", "solve_bfgs",
    "solve_inexact_newton", "solve_newton",
]
