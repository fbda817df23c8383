"""
Damped Newton Linearization
<dA(u) (Phi(u) - u), v> = delta [F(v) - <A(grad u), grad v>], with the Jacobian
dA(g) = 2 mu'(|g|^2) g g^T + mu(|g|^2) I frozen per element.

The damping window is (0, 2 C'_ell / L], where C'_ell is the sampled lower
eigenvalue bound of the Jacobian; bind() clamps a damping outside it.
"""
from typing import Tuple

import numpy as np

import config
from exceptions import InvalidParameterError
from fem import Discretization
from interfaces import ILinearization
from nonlinearity import ScalarNonlinearity, flux_jacobian, spectral_bounds
from utils.logger import setup_logger

logger = setup_logger("ailfem.newton")


def admissible_delta(n: ScalarNonlinearity) -> float:
    """delta_max = 2 C'_ell / L"""
    c_ell, _ = spectral_bounds(n)
    if c_ell <= 0:
        raise InvalidParameterError(
            f"Jacobian of {n.name} is not uniformly elliptic (C'_ell = {c_ell:.4g}); Newton is disabled"
        )
    return 2.0 * c_ell / n.lipschitz


class DampedNewton(ILinearization):

    def __init__(self, delta: float = config.NEWTON_DEFAULT_DELTA):
        if not np.isfinite(delta) or delta <= 0:
            raise InvalidParameterError(f"Newton damping must be positive, got {delta}")
        self.delta = float(delta)

    @property
    def name(self) -> str:
        return f"newton:{self.delta!r}"

    def bind(self, n: ScalarNonlinearity) -> "DampedNewton":
        delta_max = admissible_delta(n)
        if self.delta <= delta_max:
            return self
        clamped = config.NEWTON_WINDOW_SAFETY * delta_max
        logger.warning(
            f"Newton damping {self.delta:g} outside (0, {delta_max:.6g}] for {n.name}; using {clamped:.6g}"
        )
        return DampedNewton(clamped)

    def element_weights(self, disc: Discretization, coefficients: np.ndarray) -> np.ndarray:
        return flux_jacobian(disc.nonlinearity, disc.gradients(coefficients)) / self.delta

    def coercivity_constant(self, n: ScalarNonlinearity) -> float:
        c_ell, _ = spectral_bounds(n)
        return c_ell / self.delta - n.lipschitz / 2.0

    def ellipticity_bounds(self, n: ScalarNonlinearity) -> Tuple[float, float]:
        c_ell, c_cnt = spectral_bounds(n)
        return c_ell / self.delta, c_cnt / self.delta
