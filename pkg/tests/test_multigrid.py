import numpy as np
import pytest
import scipy.sparse as sp

from exceptions import FactorizationError, InsufficientDataError, InvalidParameterError
from fem import Discretization, DofMap, FeFunction, assemble_weighted_stiffness
from interfaces import LinearizedSystem, SolverStats
from linearizations import DampedNewton, Kacanov
from meshing import make_domain, uniform_refine
from problems import get_problem
from solvers import (
    DirectSolver,
    Factorization,
    MultigridSolver,
    MultilevelHierarchy,
    direct_solve,
    estimate_contraction,
    one_step,
)


@pytest.fixture
def hierarchy(corner_pyramid):
    h = MultilevelHierarchy(corner_pyramid[0])
    for mesh in corner_pyramid[1:]:
        h.extend(mesh)
    return h


def _poisson(dofs, rng):
    matrix = assemble_weighted_stiffness(dofs, 1.0)
    return LinearizedSystem(matrix, rng.normal(size=dofs.n_dofs), FeFunction.zeros(dofs))


def _a_norm(matrix, x):
    return float(np.sqrt(x @ (matrix @ x)))


def test_hierarchy_levels(hierarchy, corner_pyramid):
    assert hierarchy.n_levels == len(corner_pyramid)
    assert hierarchy.finest.mesh is corner_pyramid[-1]
    assert hierarchy.level_of(corner_pyramid[3]) == 3
    assert hierarchy.coverage()
    for level in range(1, hierarchy.n_levels):
        dofs = hierarchy.dofmaps[level]
        new_dofs = dofs.vertex_to_dof[dofs.mesh.new_vertices]
        assert set(new_dofs[new_dofs >= 0].tolist()) <= set(hierarchy.smoothing_sets[level].tolist())
        p = hierarchy.prolongations[level]
        assert p.shape == (dofs.n_dofs, hierarchy.dofmaps[level - 1].n_dofs)


def test_extend_is_idempotent_for_finest(hierarchy):
    levels = hierarchy.n_levels
    assert hierarchy.extend(hierarchy.finest.mesh) is hierarchy.finest
    assert hierarchy.n_levels == levels


def test_extend_rejects_non_nested_mesh(hierarchy):
    with pytest.raises(InvalidParameterError):
        hierarchy.extend(uniform_refine(uniform_refine(hierarchy.finest.mesh)))
    with pytest.raises(InvalidParameterError):
        hierarchy.level_of(make_domain("lshape"))


def test_vcycle_contracts_for_poisson(hierarchy, rng):
    system = _poisson(hierarchy.finest, rng)
    solver = MultigridSolver(hierarchy, measure=True)
    exact = direct_solve(system).coefficients
    u = FeFunction.zeros(hierarchy.finest)
    errors = [_a_norm(system.matrix, u.coefficients - exact)]
    for _ in range(8):
        u = solver.one_step(system, u)
        errors.append(_a_norm(system.matrix, u.coefficients - exact))
    assert all(after < before for before, after in zip(errors, errors[1:]))
    assert estimate_contraction(solver.stats) < 0.9
    assert solver.stats.steps == 8


@pytest.mark.parametrize("method", [Kacanov(), DampedNewton(0.1)])
def test_vcycle_contracts_for_linearized_systems(method, hierarchy, rng):
    problem = get_problem("lshape")
    disc = Discretization(hierarchy.finest, problem.data, problem.nonlinearity)
    point = FeFunction(disc.dofs, rng.normal(scale=0.5, size=disc.n_dofs))
    system = method.bind(problem.nonlinearity).build_system(disc, point)
    solver = MultigridSolver(hierarchy)
    u = point
    for _ in range(5):
        u = solver.one_step(system, u)
    assert 0 < estimate_contraction(solver.stats) < 0.99


def test_iterates_converge_to_direct_solution(hierarchy, rng):
    system = _poisson(hierarchy.finest, rng)
    u = FeFunction.zeros(hierarchy.finest)
    for _ in range(60):
        u = one_step(hierarchy, system, u)
    exact = direct_solve(system).coefficients
    assert _a_norm(system.matrix, u.coefficients - exact) <= 1e-6 * _a_norm(system.matrix, exact)


def test_coarse_levels_of_the_hierarchy(hierarchy, rng):
    # a system living on an intermediate level only uses the levels below it
    dofs = hierarchy.dofmaps[4]
    system = _poisson(dofs, rng)
    solver = MultigridSolver(hierarchy)
    u = solver.one_step(system, FeFunction.zeros(dofs))
    assert u.dofs is dofs
    assert estimate_contraction(solver.stats) < 0.9


def test_empty_system():
    h = MultilevelHierarchy(make_domain("lshape"))
    dofs = h.finest
    system = LinearizedSystem(sp.csr_matrix((0, 0)), np.zeros(0), FeFunction.zeros(dofs))
    solver = MultigridSolver(h)
    assert solver.one_step(system, FeFunction.zeros(dofs)).coefficients.shape == (0,)
    with pytest.raises(InsufficientDataError):
        estimate_contraction(solver.stats)


def test_dimension_mismatch(hierarchy, rng):
    system = _poisson(hierarchy.finest, rng)
    wrong = FeFunction.zeros(hierarchy.dofmaps[2])
    with pytest.raises(InvalidParameterError):
        MultigridSolver(hierarchy).one_step(system, wrong)


def test_system_outside_hierarchy(hierarchy, rng):
    system = _poisson(DofMap.from_mesh(uniform_refine(hierarchy.finest.mesh)), rng)
    with pytest.raises(InvalidParameterError):
        MultigridSolver(hierarchy).one_step(system, FeFunction.zeros(system.dofs))


def test_direct_solver_step(hierarchy, rng):
    system = _poisson(hierarchy.finest, rng)
    solver = DirectSolver()
    u = solver.one_step(system, FeFunction.zeros(hierarchy.finest))
    assert np.allclose(system.matrix @ u.coefficients, system.rhs)
    assert solver.one_step(system, u) is u
    assert solver.stats.steps == 2


def test_singular_factorization():
    with pytest.raises(FactorizationError):
        Factorization(sp.csr_matrix((2, 2))).solve(np.ones(2))


def test_solver_stats_floor():
    stats = SolverStats()
    stats.record(1.0, 0.5)
    stats.record(1e-14, 1e-15, floor=1e-12)
    assert stats.ratios == [0.5]
    assert stats.steps == 2
    other = SolverStats()
    other.record(2.0, 1.0)
    stats.merge(other)
    assert stats.ratios == [0.5, 0.5]
    assert stats.steps == 3


def test_vcycle_is_linear(hierarchy, rng):
    dofs = hierarchy.finest
    matrix = assemble_weighted_stiffness(dofs, 1.0)
    b1, b2 = rng.normal(size=(2, dofs.n_dofs))
    u1, u2 = rng.normal(size=(2, dofs.n_dofs))

    def step(rhs, u):
        system = LinearizedSystem(matrix, rhs, FeFunction.zeros(dofs))
        return one_step(hierarchy, system, FeFunction(dofs, u)).coefficients

    combined = step(b1 + 2.0 * b2, u1 + 2.0 * u2)
    assert np.allclose(combined, step(b1, u1) + 2.0 * step(b2, u2), rtol=0, atol=1e-12 * np.abs(combined).max())


def test_error_propagation_is_self_adjoint(hierarchy, rng):
    dofs = hierarchy.finest
    matrix = assemble_weighted_stiffness(dofs, 1.0)
    system = LinearizedSystem(matrix, np.zeros(dofs.n_dofs), FeFunction.zeros(dofs))
    for _ in range(5):
        x, y = rng.normal(size=(2, dofs.n_dofs))
        ex = one_step(hierarchy, system, FeFunction(dofs, x)).coefficients
        ey = one_step(hierarchy, system, FeFunction(dofs, y)).coefficients
        left, right = ex @ (matrix @ y), x @ (matrix @ ey)
        assert left == pytest.approx(right, rel=1e-10)


def test_algebraic_error_envelope(hierarchy, rng):
    system = _poisson(hierarchy.finest, rng)
    solver = MultigridSolver(hierarchy, measure=True)
    exact = direct_solve(system).coefficients
    iterates = [FeFunction.zeros(hierarchy.finest)]
    for _ in range(6):
        iterates.append(solver.one_step(system, iterates[-1]))
    q = estimate_contraction(solver.stats)
    for before, after in zip(iterates, iterates[1:]):
        increment = _a_norm(system.matrix, after.coefficients - before.coefficients)
        error_before = _a_norm(system.matrix, exact - before.coefficients)
        error_after = _a_norm(system.matrix, exact - after.coefficients)
        assert (1 - q) / q * error_after <= increment * (1 + 1e-10)
        assert increment <= (1 + q) * error_before * (1 + 1e-10)


def test_direct_solve_small_systems(rng):
    mesh = make_domain("square")
    for _ in range(3):
        mesh = uniform_refine(mesh)
    dofs = DofMap.from_mesh(mesh)
    matrix = assemble_weighted_stiffness(dofs, 1.0)
    zero = direct_solve(LinearizedSystem(matrix, np.zeros(dofs.n_dofs), FeFunction.zeros(dofs)))
    assert np.all(zero.coefficients == 0.0)
    rhs = rng.normal(size=dofs.n_dofs)
    u = direct_solve(LinearizedSystem(matrix, rhs, FeFunction.zeros(dofs)))
    assert np.linalg.norm(matrix @ u.coefficients - rhs) <= 1e-12 * np.linalg.norm(rhs)
