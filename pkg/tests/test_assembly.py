import numpy as np
import pytest
import scipy.sparse as sp

from elastisolve.assembly import (BoundaryConditions, DirichletBC, DynamicState, ElasticityProblem, NeumannBC,
                                  ProblemDefinition, RobinBC, apply_dirichlet, assemble_energy, assemble_jacobian,
                                  assemble_residual, newmark_advance, rotation_displacement, shape_functions,
                                  solve_with_load_ramp)
from elastisolve.linalg import BlockOperator
from elastisolve.materials import NeoHookean, NeoHookeanParams
from elastisolve.mesh import build_bar_mesh, build_cook_mesh, build_dof_map
from elastisolve.nonlinear import NonlinearConfig, solve_newton

from helpers import (admissible_state, cook_problem, fd_gradient_error, fd_jacobian_error, heart_problem,
                     single_tet_mesh, twist_problem, two_tet_mesh)


def free_problem(mesh, order="P1", **kwargs):
    V = build_dof_map(mesh, order, 3)
    return ElasticityProblem(ProblemDefinition(mesh, V, NeoHookean(), **kwargs))


# ---------------------------------------------------------------- shape functions

@pytest.mark.parametrize("order", [1, 2])
def test_shape_functions_partition_of_unity(order):
    rng = np.random.default_rng(0)
    lam = rng.dirichlet(np.ones(4), size=7)
    N, dN = shape_functions(order, lam)
    assert np.allclose(N.sum(axis=-1), 1.0)
    # the sum of the basis is constant along the simplex, so its derivative is a multiple of (1, 1, 1, 1)
    s = dN.sum(axis=-2)
    assert np.allclose(s - s[..., :1], 0.0)


def test_p2_shape_functions_are_nodal():
    nodes = np.vstack([np.eye(4), 0.5 * (np.eye(4)[[0, 0, 0, 1, 1, 2]] + np.eye(4)[[1, 2, 3, 2, 3, 3]])])
    N, _ = shape_functions(2, nodes)
    assert np.allclose(N, np.eye(10))


# ---------------------------------------------------------------- energy

def test_energy_zero_without_load():
    p = free_problem(build_cook_mesh(1))
    assert assemble_energy(p, np.zeros(p.n_dofs)) == 0.0


def test_energy_zero_at_rest_with_body_force():
    p = free_problem(build_cook_mesh(1), body_force=(1.0, 2.0, 3.0))
    assert assemble_energy(p, np.zeros(p.n_dofs)) == 0.0


def test_single_tet_energy_closed_form():
    mesh = single_tet_mesh()
    p = free_problem(mesh)
    Fa = np.array([[1.1, 0.05, 0.0], [0.02, 0.95, 0.1], [0.0, -0.03, 1.02]])
    d = ((mesh.vertices @ Fa.T) - mesh.vertices).ravel()
    params = NeoHookeanParams.from_lame()
    J = np.linalg.det(Fa)
    psi = params.C1 * (J ** (-2 / 3) * np.sum(Fa * Fa) - 3) + params.k * (J * J - 1 - 2 * np.log(J))
    assert assemble_energy(p, d) == pytest.approx(psi / 6.0, rel=1e-13)


def test_body_force_and_traction_work():
    mesh = build_bar_mesh(1, 1, 1, 2.0)
    p = free_problem(mesh, body_force=(0.0, 0.0, -3.0),
                     bcs=BoundaryConditions(neumann=(NeumannBC("top", (0.0, 0.0, 5.0)),)))
    # rigid translation by e_z: no strain energy, work = f * volume + t * area
    d = np.tile([0.0, 0.0, 1.0], mesh.n_vertices)
    assert assemble_energy(p, d) == pytest.approx(-(-3.0 * 2.0 + 5.0 * 1.0), rel=1e-13)


# ---------------------------------------------------------------- residual

def test_residual_zero_without_load():
    p = free_problem(build_cook_mesh(1))
    assert np.linalg.norm(assemble_residual(p, np.zeros(p.n_dofs))) == 0.0


def test_residual_vanishes_under_translation():
    mesh = build_cook_mesh(1)
    p = free_problem(mesh)
    d = np.tile([3.0, -1.0, 2.0], mesh.n_vertices)
    R = assemble_residual(p, d)
    scale = NeoHookeanParams.from_lame().C1 * mesh.cell_volumes.max()
    assert np.abs(R).max() <= 1e-10 * scale


PROBLEMS = {
    "cook": (lambda: cook_problem(1), 1e-3),
    "cook-p2": (lambda: cook_problem(1, order="P2"), 1e-3),
    "twist": (twist_problem, 1e-2),
    "heart-passive": (lambda: heart_problem(dynamic=False, active=False), 2e-4),
    "heart-dynamic": (lambda: heart_problem(dynamic=True, active=False), 2e-4),
}


@pytest.mark.parametrize("name", list(PROBLEMS))
def test_gradient_consistency(name):
    build, amplitude = PROBLEMS[name]
    rng = np.random.default_rng(1)
    problem = build()
    for _ in range(3):
        x = admissible_state(problem, amplitude, rng)
        assert fd_gradient_error(problem, x, rng) <= 1e-5


@pytest.mark.parametrize("name", list(PROBLEMS) + ["heart-active", "cook-follower"])
def test_jacobian_consistency(name):
    if name == "heart-active":
        build, amplitude = (lambda: heart_problem()), 2e-4
    elif name == "cook-follower":
        build, amplitude = (lambda: cook_problem(1, follower=True)), 1e-3
    else:
        build, amplitude = PROBLEMS[name]
    rng = np.random.default_rng(2)
    problem = build()
    x = admissible_state(problem, amplitude, rng)
    assert fd_jacobian_error(problem, x, rng, n_dirs=20) <= 1e-5


def test_linear_elastic_limit_jacobian():
    rng = np.random.default_rng(3)
    problem = cook_problem(1)
    x = admissible_state(problem, 1e-7, rng)
    assert fd_jacobian_error(problem, x, rng, n_dirs=20) <= 1e-5


@pytest.mark.parametrize("build", [lambda: cook_problem(1), lambda: heart_problem(dynamic=False, active=False)],
                         ids=["cook", "heart-passive"])
def test_static_jacobian_symmetric(build):
    rng = np.random.default_rng(4)
    problem = build()
    x = admissible_state(problem, 1e-4, rng)
    J = problem.assemble_jacobian(x)
    assert sp.linalg.norm(J - J.T) <= 1e-10 * sp.linalg.norm(J)


def test_follower_jacobian_is_unsymmetric():
    rng = np.random.default_rng(5)
    problem = cook_problem(1, follower=True)
    J = problem.assemble_jacobian(admissible_state(problem, 1e-3, rng))
    assert sp.linalg.norm(J - J.T) > 1e-12 * sp.linalg.norm(J)


def test_mixed_jacobian_blocks():
    rng = np.random.default_rng(6)
    problem = twist_problem()
    J = assemble_jacobian(problem, *np.split(admissible_state(problem, 1e-2, rng), [problem.n_u]))
    assert isinstance(J, BlockOperator)
    assert J.C is None
    assert (J.B2 != J.B1.T).nnz == 0


def test_patch_test():
    mesh = build_cook_mesh(2)
    G = np.array([[0.02, -0.01, 0.005], [0.01, 0.03, 0.0], [-0.004, 0.002, -0.01]])
    affine = lambda X: X @ G.T  # noqa: E731
    regions = tuple(DirichletBC(r, affine) for r in mesh.region_labels)
    p = free_problem(mesh, bcs=BoundaryConditions(dirichlet=regions))
    d = affine(mesh.vertices).ravel()
    R = assemble_residual(p, d)
    free = np.setdiff1d(np.arange(p.n_dofs), p.dirichlet_dofs)
    assert free.size > 0
    scale = np.abs(R).max()
    assert np.abs(R[free]).max() <= 1e-9 * scale


def test_quadrature_sufficiency_p1():
    rng = np.random.default_rng(7)
    base = cook_problem(1)
    rich = cook_problem(1, quadrature_degree=4)
    x = admissible_state(base, 1e-3, rng)
    e2, e4 = base.energy(x), rich.energy(x)
    assert abs(e2 - e4) <= 1e-8 * abs(e4)


@pytest.mark.parametrize("threads", [2, 4])
def test_assembly_independent_of_threads(threads):
    rng = np.random.default_rng(8)
    mesh = build_cook_mesh(2)
    V = build_dof_map(mesh, "P1", 3)
    definition = ProblemDefinition(mesh, V, NeoHookean(), BoundaryConditions(dirichlet=(DirichletBC("clamped"),)))
    one = ElasticityProblem(definition, threads=1, chunk_size=64)
    many = ElasticityProblem(definition, threads=threads, chunk_size=64)
    x = admissible_state(one, 1e-3, rng)
    assert np.array_equal(one.assemble_residual(x), many.assemble_residual(x))
    A, B = one.assemble_jacobian(x), many.assemble_jacobian(x)
    assert np.array_equal(A.data, B.data) and np.array_equal(A.indices, B.indices)
    assert one.energy(x) == many.energy(x)


def test_zero_density_recovers_statics():
    rng = np.random.default_rng(9)
    static = heart_problem(dynamic=False, active=False, robin=False)
    mesh, V = static.definition.mesh, static.definition.displacement_space
    dyn = ElasticityProblem(ProblemDefinition(mesh, V, static.definition.material,
                                              dynamic=DynamicState.at_rest(V.num_dofs, density=0.0)))
    x = admissible_state(static, 2e-4, rng)
    assert np.array_equal(static.assemble_residual(x), dyn.assemble_residual(x))
    assert (static.assemble_jacobian(x) != dyn.assemble_jacobian(x)).nnz == 0


def test_jacobian_counter():
    p = cook_problem(1)
    x = p.initial_guess()
    p.assemble_jacobian(x)
    p.tangent(x)
    assert p.jacobian_assemblies == 2


# ---------------------------------------------------------------- Dirichlet

def test_apply_dirichlet_all_constrained():
    rng = np.random.default_rng(10)
    A = sp.csr_matrix(rng.standard_normal((4, 4)))
    g = np.array([1.0, -2.0, 3.0, 0.5])
    M, b = apply_dirichlet(A, rng.standard_normal(4), np.arange(4), g)
    assert np.array_equal(M.toarray(), np.eye(4))
    assert np.array_equal(b, g)


def test_apply_dirichlet_nothing_constrained():
    rng = np.random.default_rng(11)
    A = sp.csr_matrix(rng.standard_normal((4, 4)))
    r = rng.standard_normal(4)
    M, b = apply_dirichlet(A, r, [], [])
    assert (M != A).nnz == 0
    assert np.array_equal(b, r)


def test_apply_dirichlet_matches_reduced_system():
    mesh = two_tet_mesh()
    p = free_problem(mesh)
    rng = np.random.default_rng(12)
    d = 1e-2 * rng.standard_normal(p.n_dofs)
    K = p.assemble_jacobian(d) + sp.identity(p.n_dofs) * 1e6  # pin the rigid modes
    f = rng.standard_normal(p.n_dofs)
    c, g = 5, 0.3
    M, b = apply_dirichlet(K, f, [c], [g])
    x = np.linalg.solve(M.toarray(), b)
    # oracle: solve for the free unknowns with x_c = g moved to the right-hand side
    free = np.setdiff1d(np.arange(p.n_dofs), [c])
    Kd = K.toarray()
    xf = np.linalg.solve(Kd[np.ix_(free, free)], f[free] - Kd[free, c] * g)
    assert x[c] == pytest.approx(g)
    assert np.allclose(x[free], xf, rtol=1e-10, atol=1e-14)
    assert np.allclose(M.toarray(), M.toarray().T) == np.allclose(Kd, Kd.T)


def test_apply_dirichlet_block_operator():
    problem = twist_problem()
    x = problem.initial_guess()
    K, rhs = problem.tangent(x)
    c = problem.dirichlet_dofs
    assert isinstance(K, BlockOperator)
    assert np.all(K.A[c][:, c].toarray() == np.eye(len(c)))
    assert K.B1[c].nnz == 0 and K.B2[:, c].nnz == 0
    assert np.allclose(rhs[c], problem.dirichlet_values - x[c])


def test_initial_guess_and_residual_rows():
    problem = twist_problem()
    x = problem.initial_guess()
    c = problem.dirichlet_dofs
    assert np.array_equal(x[c], problem.dirichlet_values)
    assert np.all(problem.residual(x)[c] == 0.0)
    rot = rotation_displacement(np.pi / 2)(np.array([[1.0, 0.5, 0.0]]))
    assert np.allclose(rot, [[-0.5, 0.5, 0.0]])


def test_boundary_regions_used_once():
    with pytest.raises(ValueError):
        BoundaryConditions(dirichlet=(DirichletBC("top"),), robin=(RobinBC("top"),))


# ---------------------------------------------------------------- Newmark

def test_newmark_constant_velocity():
    v = np.array([1.0, -2.0])
    state = DynamicState(np.zeros(2), v, np.zeros(2), dt=0.1)
    v_new, a_new = newmark_advance(state, 0.1 * v)
    assert np.allclose(a_new, 0.0, atol=1e-13)
    assert np.allclose(v_new, v)


def test_newmark_quadratic_motion_exact():
    # d(t) = 1 + 2 t + 3 t^2 has constant acceleration 6
    d = lambda t: 1 + 2 * t + 3 * t * t  # noqa: E731
    dt, t = 0.05, 0.3
    state = DynamicState(np.array([d(t)]), np.array([2 + 6 * t]), np.array([6.0]), dt=dt)
    v_new, a_new = newmark_advance(state, np.array([d(t + dt)]))
    assert a_new[0] == pytest.approx(6.0, rel=1e-12)
    assert v_new[0] == pytest.approx(2 + 6 * (t + dt), rel=1e-12)


def velocity_error(n_steps, T=1.0):
    dt = T / n_steps
    state = DynamicState(np.array([0.0]), np.array([1.0]), np.array([0.0]), dt=dt)
    for k in range(1, n_steps + 1):
        d_new = np.array([np.sin(k * dt)])
        v, a = newmark_advance(state, d_new)
        state = DynamicState(d_new, v, a, dt=dt)
    return abs(state.v[0] - np.cos(T))


def test_newmark_second_order():
    ratio = velocity_error(40) / velocity_error(80)
    assert 3.5 < ratio < 4.5


def test_dynamic_state_validation():
    with pytest.raises(ValueError):
        DynamicState.at_rest(3, dt=0.0)
    with pytest.raises(ValueError):
        DynamicState.at_rest(3, beta=0.6)
    with pytest.raises(ValueError):
        DynamicState.at_rest(3, gamma=0.4)
    with pytest.raises(ValueError):
        DynamicState.at_rest(3, density=-1.0)


def test_advance_updates_state():
    problem = heart_problem()
    x = problem.initial_guess() + 1e-5
    problem.advance(x)
    dyn = problem.definition.dynamic
    assert dyn.time == pytest.approx(0.008)
    assert np.array_equal(dyn.d, x)
    assert np.allclose(dyn.a, 4 * x / 0.008 ** 2)


# ---------------------------------------------------------------- load ramp

def test_load_ramp_reaches_full_load():
    problem = cook_problem(1, tau=2e6)
    config = NonlinearConfig("NK")
    x, reports = solve_with_load_ramp(problem, lambda pr, x0: solve_newton(pr, config, x0), 3)
    assert len(reports) == 3 and all(r.converged for r in reports)
    assert problem.load_factor == 1.0
    R = problem.residual(x)
    assert np.linalg.norm(R) <= 1e-6 * np.linalg.norm(problem.residual(problem.initial_guess()))
