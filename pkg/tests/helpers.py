"""Finite-difference oracles and small problem builders shared by the tests."""

import numpy as np

from elastisolve.assembly import (BoundaryConditions, DirichletBC, DynamicState, ElasticityProblem,
                                  NeumannBC, ProblemDefinition, RobinBC, rotation_displacement)
from elastisolve.materials import Guccione, NeoHookean, TwistMaterial
from elastisolve.mesh import Mesh, boundary_facets, build_bar_mesh, build_cook_mesh, build_dof_map, build_ellipsoid_mesh


def custom_mesh(vertices, tetrahedra, label="wall"):
    vertices = np.asarray(vertices, dtype=float)
    tetrahedra = np.asarray(tetrahedra)
    facets = boundary_facets(tetrahedra, vertices)
    return Mesh(vertices, tetrahedra, facets, np.ones(len(facets), dtype=int), {label: 1})


def single_tet_mesh():
    return custom_mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], [[0, 1, 2, 3]])


def two_tet_mesh():
    return custom_mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]],
                       [[0, 1, 2, 3], [1, 2, 3, 4]])


def cook_problem(refinement=1, tau=1e6, order="P1", follower=False, **kwargs):
    mesh = build_cook_mesh(refinement)
    V = build_dof_map(mesh, order, 3)
    bcs = BoundaryConditions(dirichlet=(DirichletBC("clamped"),),
                             neumann=(NeumannBC("loaded", (0.0, tau, 0.0), follower),))
    return ElasticityProblem(ProblemDefinition(mesh, V, NeoHookean(), bcs, **kwargs))


def twist_problem(angle=np.pi / 6, n=(1, 1, 2)):
    mesh = build_bar_mesh(*n)
    V = build_dof_map(mesh, "P2", 3)
    bcs = BoundaryConditions(dirichlet=(DirichletBC("base"),
                                        DirichletBC("top", rotation_displacement(angle), (0, 1))))
    return ElasticityProblem(ProblemDefinition(mesh, V, TwistMaterial(), bcs,
                                               pressure_space=build_dof_map(mesh, "P0", 1)))


def heart_problem(dynamic=True, active=True, robin=True, refinement=1):
    mesh = build_ellipsoid_mesh(refinement=refinement)
    V = build_dof_map(mesh, "P1", 3)
    bcs = BoundaryConditions(robin=(RobinBC("epi"),) if robin else ())
    dyn = DynamicState.at_rest(V.num_dofs) if dynamic else None
    act = (lambda t: 1e4) if active else None
    return ElasticityProblem(ProblemDefinition(mesh, V, Guccione(), bcs, dynamic=dyn, activation=act))


def admissible_state(problem, amplitude, rng):
    """Random state of the given relative size with Dirichlet data imposed."""
    x = problem.initial_guess()
    size = np.ptp(problem.definition.mesh.vertices, axis=0).max()
    x[:problem.n_u] += amplitude * size * rng.uniform(-1, 1, problem.n_u)
    if problem.mixed:
        x[problem.n_u:] = 1e3 * rng.uniform(-1, 1, problem.n_p)
    return x


def fd_gradient_error(problem, x, rng, n_dirs=5, h=1e-5):
    """Largest relative mismatch of directional derivatives of the energy."""
    R = problem.assemble_residual(x)
    scale = np.abs(x[:problem.n_u]).max() or 1.0
    errs = []
    for _ in range(n_dirs):
        v = np.zeros_like(x)
        v[:problem.n_u] = rng.standard_normal(problem.n_u)
        eps = h * scale / np.abs(v).max()
        fd = (problem.energy(x + eps * v) - problem.energy(x - eps * v)) / (2 * eps)
        # typical size of R.v for a random direction
        errs.append(abs(fd - R @ v) / (np.linalg.norm(R) * np.linalg.norm(v) / np.sqrt(len(v))))
    return max(errs)


def fd_jacobian_error(problem, x, rng, n_dirs=20, h=1e-5):
    """Largest relative mismatch between Jacobian actions and residual differences.

    Directions are scaled per field so displacement and pressure perturbations
    are both small relative to their own magnitudes.
    """
    J = problem.assemble_jacobian(x)
    n = problem.n_u
    du = max(np.abs(x[:n]).max(), 1e-3 * np.ptp(problem.definition.mesh.vertices, axis=0).max())
    dp = max(np.abs(x[n:]).max(), 1.0) if problem.mixed else 1.0
    errs = []
    for _ in range(n_dirs):
        v = rng.standard_normal(len(x))
        v[:n] *= du
        v[n:] *= dp
        fd = (problem.assemble_residual(x + h * v) - problem.assemble_residual(x - h * v)) / (2 * h)
        Jv = J @ v
        errs.append(np.linalg.norm(fd - Jv) / np.linalg.norm(Jv))
    return max(errs)
