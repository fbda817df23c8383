import numpy as np
import pytest

from exceptions import UnknownNameError
from problems import (
    PROBLEMS,
    central_difference_gradient,
    get_problem,
    lshape_gradient,
    lshape_solution,
    square_gradient,
    square_solution,
)


def _lshape_points(rng, count):
    x = rng.uniform(-0.95, 0.95, size=(4 * count, 2))
    inside = ~((x[:, 0] > 0) & (x[:, 1] < 0.01)) & (np.linalg.norm(x, axis=1) > 0.05)
    return x[inside][:count]


def test_registry():
    assert set(PROBLEMS) == {"lshape", "zshape", "square"}
    for name in PROBLEMS:
        problem = get_problem(name)
        assert problem.name == name
        assert problem.zarantonello_delta == pytest.approx(1.0 / problem.nonlinearity.lipschitz)
    with pytest.raises(UnknownNameError):
        get_problem("cube")


def test_lshape_gradient_matches_finite_differences(rng):
    x = _lshape_points(rng, 50)
    assert np.allclose(lshape_gradient(x), central_difference_gradient(lshape_solution, x), rtol=1e-5, atol=1e-6)


def test_square_gradient_matches_finite_differences(rng):
    x = rng.uniform(0.05, 0.95, size=(50, 2))
    assert np.allclose(square_gradient(x), central_difference_gradient(square_solution, x), rtol=1e-6, atol=1e-7)


def test_lshape_solution_vanishes_on_boundary():
    t = np.linspace(0.0, 1.0, 11)
    boundary = np.concatenate([
        np.column_stack([t, np.zeros_like(t)]),       # re-entrant edge phi = 0
        np.column_stack([np.zeros_like(t), -t]),      # re-entrant edge phi = 3 pi / 2
        np.column_stack([-np.ones_like(t), 2 * t - 1]),
        np.column_stack([2 * t - 1, np.ones_like(t)]),
    ])
    assert np.allclose(lshape_solution(boundary), 0.0, atol=1e-14)


def test_zshape_data():
    data = get_problem("zshape").data
    x = np.zeros((3, 4, 2))
    assert np.array_equal(data.f(x), np.ones((3, 4)))
    assert np.array_equal(data.f_vec(x), np.zeros((3, 4, 2)))
    assert not data.has_exact_solution


def test_manufactured_data_is_the_exact_flux(rng):
    problem = get_problem("square")
    x = rng.uniform(0, 1, size=(5, 2))
    n = problem.nonlinearity
    g = square_gradient(x)
    s = np.sum(g * g, axis=1)
    assert np.allclose(problem.data.f_vec(x), n.mu(s)[:, None] * g)
    assert np.array_equal(problem.data.f(x), np.zeros(5))


def test_lshape_solution_formula():
    # r^(2/3) sin(2 phi / 3) cos(phi) (1 - x^2)(1 - y^2) at phi = 3 pi / 4 and 5 pi / 4
    radial = 0.5 ** (1.0 / 3.0)
    bubble = 0.75 * 0.75
    x = np.array([[-0.5, 0.5], [-0.5, -0.5]])
    expected = [radial * 1.0 * -np.sqrt(0.5) * bubble, radial * 0.5 * -np.sqrt(0.5) * bubble]
    assert np.allclose(lshape_solution(x), expected, rtol=1e-13, atol=0)
    # the angular factor vanishes on the re-entrant edge y = 0, x > 0, unlike cos(2 phi / 3)
    edge = np.column_stack([np.linspace(0.1, 0.9, 9), np.zeros(9)])
    assert np.all(lshape_solution(edge) == 0.0)
