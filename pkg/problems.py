"""
Benchmark Problems - The Registry
Problem data (f, f_vec, optional exact solution) paired with a domain and a nonlinearity.
Homogeneous Dirichlet data everywhere.
"""
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from exceptions import UnknownNameError
from meshing import Mesh, make_domain
from nonlinearity import ScalarNonlinearity, builtin, flux

PointMap = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ProblemData:
    """
    Right-hand side F(v) = <f, v> + <f_vec, grad v>.
    Evaluators take points of shape (..., 2); f returns (...), f_vec and exact_gradient (..., 2).
    """
    f: PointMap
    f_vec: PointMap
    exact_solution: Optional[PointMap] = None
    exact_gradient: Optional[PointMap] = None
    name: str = "custom"

    @property
    def has_exact_solution(self) -> bool:
        return self.exact_gradient is not None


@dataclass(frozen=True)
class Benchmark:
    name: str
    domain: str
    nonlinearity: ScalarNonlinearity
    data: ProblemData
    zarantonello_delta: float

    def initial_mesh(self) -> Mesh:
        return make_domain(self.domain)


def zero_scalar(x: np.ndarray) -> np.ndarray:
    return np.zeros(np.shape(x)[:-1])


def one_scalar(x: np.ndarray) -> np.ndarray:
    return np.ones(np.shape(x)[:-1])


def zero_vector(x: np.ndarray) -> np.ndarray:
    return np.zeros(np.shape(x))


# ==================== L-SHAPE ====================
# u = r^(2/3) sin(2 phi / 3) cos(phi) (1 - x^2)(1 - y^2), phi in [0, 3 pi / 2]
# sin(2 phi / 3) vanishes on both re-entrant edges (phi = 0, 3 pi / 2); a cos(2 phi / 3) factor
# would leave u = r^(2/3)(1 - x^2) on the edge y = 0, x > 0.

def _polar(x: np.ndarray):
    r = np.hypot(x[..., 0], x[..., 1])
    phi = np.mod(np.arctan2(x[..., 1], x[..., 0]), 2.0 * np.pi)
    return r, phi


def lshape_solution(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    r, phi = _polar(x)
    bubble = (1.0 - x[..., 0] ** 2) * (1.0 - x[..., 1] ** 2)
    return r ** (2.0 / 3.0) * np.sin(2.0 * phi / 3.0) * np.cos(phi) * bubble


def lshape_gradient(x: np.ndarray) -> np.ndarray:
    """Analytic gradient; singular only at the origin, which is never a quadrature point"""
    x = np.asarray(x, dtype=float)
    r, phi = _polar(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        s23, c23 = np.sin(2.0 * phi / 3.0), np.cos(2.0 * phi / 3.0)
        sp, cp = np.sin(phi), np.cos(phi)
        g = r ** (2.0 / 3.0) * s23 * cp
        g_r = (2.0 / 3.0) * r ** (-1.0 / 3.0) * s23 * cp
        # (1/r) dg/dphi
        g_phi = r ** (-1.0 / 3.0) * ((2.0 / 3.0) * c23 * cp - s23 * sp)
        grad_g = np.stack([g_r * cp - g_phi * sp, g_r * sp + g_phi * cp], axis=-1)

    px, py = x[..., 0], x[..., 1]
    bubble = (1.0 - px ** 2) * (1.0 - py ** 2)
    grad_bubble = np.stack([-2.0 * px * (1.0 - py ** 2), -2.0 * py * (1.0 - px ** 2)], axis=-1)
    return bubble[..., None] * grad_g + g[..., None] * grad_bubble


def _manufactured(name: str, n: ScalarNonlinearity, solution: PointMap, gradient: PointMap) -> ProblemData:
    """f = 0 and f_vec = A(grad u), so that F(v) = int A(grad u) . grad v"""
    return ProblemData(
        f=zero_scalar,
        f_vec=lambda x: flux(n, gradient(x)),
        exact_solution=solution,
        exact_gradient=gradient,
        name=name,
    )


# ==================== SQUARE ====================
# smooth u = sin(pi x) sin(pi y)

def square_solution(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])


def square_gradient(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    sx, sy = np.sin(np.pi * x[..., 0]), np.sin(np.pi * x[..., 1])
    cx, cy = np.cos(np.pi * x[..., 0]), np.cos(np.pi * x[..., 1])
    return np.pi * np.stack([cx * sy, sx * cy], axis=-1)


# ==================== REGISTRY ====================

def _lshape_benchmark() -> Benchmark:
    n = builtin("lshape")
    return Benchmark(
        name="lshape",
        domain="lshape",
        nonlinearity=n,
        data=_manufactured("lshape", n, lshape_solution, lshape_gradient),
        zarantonello_delta=1.0 / n.lipschitz,
    )


def _zshape_benchmark() -> Benchmark:
    n = builtin("zshape")
    return Benchmark(
        name="zshape",
        domain="zshape",
        nonlinearity=n,
        data=ProblemData(f=one_scalar, f_vec=zero_vector, name="zshape"),
        zarantonello_delta=1.0 / n.lipschitz,
    )


def _square_benchmark() -> Benchmark:
    n = builtin("lshape")
    return Benchmark(
        name="square",
        domain="square",
        nonlinearity=n,
        data=_manufactured("square", n, square_solution, square_gradient),
        zarantonello_delta=1.0 / n.lipschitz,
    )


PROBLEMS: Dict[str, Callable[[], Benchmark]] = {
    "lshape": _lshape_benchmark,
    "zshape": _zshape_benchmark,
    "square": _square_benchmark,
}


def get_problem(name: str) -> Benchmark:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise UnknownNameError(f"Unknown problem '{name}'. Choose from {sorted(PROBLEMS)}") from None
    return factory()


def central_difference_gradient(u: PointMap, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Finite-difference cross-check for analytic gradients"""
    x = np.asarray(x, dtype=float)
    ex = np.array([h, 0.0])
    ey = np.array([0.0, h])
    return np.stack([(u(x + ex) - u(x - ex)) / (2 * h), (u(x + ey) - u(x - ey)) / (2 * h)], axis=-1)

