"""
Zarantonello Linearization - Damped Richardson in the Laplace Inner Product
<grad (Phi(u) - u), grad v> = delta [F(v) - <A(grad u), grad v>], admissible for 0 < delta < 2/L.
"""
from typing import Tuple

import numpy as np

from exceptions import InvalidParameterError
from fem import Discretization
from interfaces import ILinearization
from nonlinearity import ScalarNonlinearity


class Zarantonello(ILinearization):

    def __init__(self, delta: float):
        if not np.isfinite(delta) or delta <= 0:
            raise InvalidParameterError(f"Zarantonello damping must be positive, got {delta}")
        self.delta = float(delta)

    @property
    def name(self) -> str:
        return f"zarantonello:{self.delta!r}"

    def bind(self, n: ScalarNonlinearity) -> "Zarantonello":
        if self.delta >= 2.0 / n.lipschitz:
            raise InvalidParameterError(
                f"Zarantonello damping {self.delta} outside (0, 2/L) = (0, {2.0 / n.lipschitz:.6g}) for {n.name}"
            )
        return self

    def element_weights(self, disc: Discretization, coefficients: np.ndarray) -> float:
        return 1.0 / self.delta

    def coercivity_constant(self, n: ScalarNonlinearity) -> float:
        return 1.0 / self.delta - n.lipschitz / 2.0

    def ellipticity_bounds(self, n: ScalarNonlinearity) -> Tuple[float, float]:
        return 1.0 / self.delta, 1.0 / self.delta
