"""
Kacanov Linearization - Parameter-Free
Freezes mu(|grad u_prev|^2) and solves the resulting linear diffusion problem:
<mu(|grad u_prev|^2) grad Phi(u_prev), grad v> = F(v).
"""
from typing import Tuple

import numpy as np

from fem import Discretization
from interfaces import ILinearization
from nonlinearity import ScalarNonlinearity


class Kacanov(ILinearization):

    @property
    def name(self) -> str:
        return "kacanov"

    def element_weights(self, disc: Discretization, coefficients: np.ndarray) -> np.ndarray:
        g = disc.gradients(coefficients)
        return disc.nonlinearity.mu(np.sum(g * g, axis=1))

    def coercivity_constant(self, n: ScalarNonlinearity) -> float:
        return n.alpha / 2.0

    def ellipticity_bounds(self, n: ScalarNonlinearity) -> Tuple[float, float]:
        # growth condition at s = 0 gives alpha <= mu <= growth_upper
        return n.alpha, n.growth_upper
