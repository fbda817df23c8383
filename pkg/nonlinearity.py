"""
Scalar Nonlinearity - The Material Law
mu, its derivative, the antiderivative M(s) = int_0^s mu(t) dt and the monotonicity
constants. Everything here is vectorized over leading axes; gradients have a trailing axis of size 2.
"""
import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy import integrate

import config
from exceptions import InvalidParameterError, UnknownNameError
from utils.logger import setup_logger

logger = setup_logger("ailfem.nonlinearity")

ScalarMap = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ScalarNonlinearity:
    """
    mu with growth condition alpha (t - s) <= mu(t^2) t - mu(s^2) s <= growth_upper (t - s).

    lipschitz is the constant L of the published benchmark (it enters damping windows
    and C*_nrg formulas); growth_upper is the sharp upper growth constant, which also
    bounds mu itself. alpha <= growth_upper <= lipschitz.
    """
    name: str
    mu: ScalarMap
    mu_prime: ScalarMap
    antiderivative: ScalarMap
    alpha: float
    lipschitz: float
    growth_upper: float

    def __post_init__(self):
        for field_name in ("mu", "mu_prime", "antiderivative"):
            if not callable(getattr(self, field_name)):
                raise InvalidParameterError(f"Nonlinearity '{self.name}' is missing {field_name}")
        if not (0 < self.alpha <= self.growth_upper <= self.lipschitz):
            raise InvalidParameterError(
                f"Nonlinearity '{self.name}' needs 0 < alpha <= growth_upper <= lipschitz, "
                f"got {self.alpha}, {self.growth_upper}, {self.lipschitz}"
            )
        self._check_antiderivative()

    def _check_antiderivative(self):
        """M(0) = 0 and M agrees with adaptive Gauss-Kronrod quadrature of mu"""
        if abs(float(self.antiderivative(np.array(0.0)))) > 0.0:
            raise InvalidParameterError(f"Nonlinearity '{self.name}': antiderivative does not vanish at 0")
        for s in config.ANTIDERIVATIVE_SAMPLES:
            reference, _ = integrate.quad(lambda t: float(self.mu(np.array(t))), 0.0, s, epsabs=0.0, epsrel=1e-12)
            value = float(self.antiderivative(np.array(s)))
            if abs(value - reference) > config.ANTIDERIVATIVE_RTOL * max(1.0, abs(reference)):
                raise InvalidParameterError(
                    f"Nonlinearity '{self.name}': antiderivative M({s}) = {value} "
                    f"disagrees with quadrature {reference}"
                )


# ==================== POINTWISE MAPS ====================

def flux(n: ScalarNonlinearity, g: np.ndarray) -> np.ndarray:
    """A(g) = mu(|g|^2) g"""
    g = np.asarray(g, dtype=float)
    s = np.sum(g * g, axis=-1)
    return n.mu(s)[..., None] * g


def flux_jacobian(n: ScalarNonlinearity, g: np.ndarray) -> np.ndarray:
    """dA(g) = 2 mu'(|g|^2) g g^T + mu(|g|^2) I"""
    g = np.asarray(g, dtype=float)
    s = np.sum(g * g, axis=-1)
    jac = 2.0 * n.mu_prime(s)[..., None, None] * g[..., :, None] * g[..., None, :]
    jac = jac + n.mu(s)[..., None, None] * np.eye(2)
    return jac


def energy_density(n: ScalarNonlinearity, g: np.ndarray) -> np.ndarray:
    """Integrand of the energy: M(|g|^2) / 2"""
    g = np.asarray(g, dtype=float)
    return 0.5 * n.antiderivative(np.sum(g * g, axis=-1))


# ==================== BUILTINS ====================

def _lshape() -> ScalarNonlinearity:
    return ScalarNonlinearity(
        name="lshape",
        mu=lambda t: 1.0 + np.exp(-t),
        mu_prime=lambda t: -np.exp(-t),
        antiderivative=lambda s: s + 1.0 - np.exp(-s),
        alpha=1.0 - 2.0 * math.exp(-1.5),
        lipschitz=6.0,
        growth_upper=2.0,
    )


def _zshape() -> ScalarNonlinearity:
    return ScalarNonlinearity(
        name="zshape",
        mu=lambda t: 1.0 + np.log1p(t) / (1.0 + t),
        mu_prime=lambda t: (1.0 - np.log1p(t)) / (1.0 + t) ** 2,
        antiderivative=lambda s: s + 0.5 * np.log1p(s) ** 2,
        alpha=0.9582898017,
        lipschitz=1.542343818,
        growth_upper=1.542343818,
    )


BUILTINS: Dict[str, Callable[[], ScalarNonlinearity]] = {
    "lshape": _lshape,
    "zshape": _zshape,
}


def builtin(name: str) -> ScalarNonlinearity:
    """The nonlinearity of a published benchmark"""
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise UnknownNameError(f"Unknown nonlinearity '{name}'. Choose from {sorted(BUILTINS)}") from None
    return factory()


def constant(value: float = 1.0) -> ScalarNonlinearity:
    """mu == value: the linear problem, alpha = L = value"""
    if value <= 0:
        raise InvalidParameterError(f"Constant nonlinearity must be positive, got {value}")
    return ScalarNonlinearity(
        name=f"constant({value:g})",
        mu=lambda t: np.full(np.shape(t), value, dtype=float),
        mu_prime=lambda t: np.zeros(np.shape(t), dtype=float),
        antiderivative=lambda s: value * np.asarray(s, dtype=float),
        alpha=value,
        lipschitz=value,
        growth_upper=value,
    )


# ==================== CHECKS ====================

def check_growth_condition(
    n: ScalarNonlinearity,
    samples: int = config.GROWTH_SAMPLES,
    t_max: float = config.GROWTH_SAMPLE_MAX,
    rtol: float = 1e-8,
) -> Tuple[bool, float]:
    """
    Sampled growth condition on all pairs t > s of a uniform grid in [0, t_max].
    Returns: (holds, worst relative violation)
    """
    t = np.linspace(0.0, t_max, samples)
    psi = n.mu(t * t) * t
    upper = np.triu(np.ones((samples, samples), dtype=bool), k=1)
    dt = (t[None, :] - t[:, None])[upper]
    dpsi = (psi[None, :] - psi[:, None])[upper]
    slack = rtol * dt + 1e-14
    low_violation = np.max((n.alpha * dt - dpsi) / dt)
    high_violation = np.max((dpsi - n.growth_upper * dt) / dt)
    worst = float(max(low_violation, high_violation))
    holds = bool(np.all(n.alpha * dt <= dpsi + slack) and np.all(dpsi <= n.growth_upper * dt + slack))
    return holds, worst


def spectral_bounds(
    n: ScalarNonlinearity,
    samples: int = config.SPECTRAL_SAMPLES,
    t_max: float = config.GROWTH_SAMPLE_MAX,
) -> Tuple[float, float]:
    """
    Sampled eigenvalue range of flux_jacobian over |g| <= t_max.
    The eigenvalues at s = |g|^2 are mu(s) and mu(s) + 2 s mu'(s).
    Returns: (C'_ell, C'_cnt)
    """
    s = np.linspace(0.0, t_max, samples) ** 2
    mu = n.mu(s)
    radial = mu + 2.0 * s * n.mu_prime(s)
    return float(min(mu.min(), radial.min())), float(max(mu.max(), radial.max()))


def describe(n: ScalarNonlinearity, growth: Optional[bool] = None) -> str:
    text = f"{n.name}: alpha={n.alpha:.10g} L={n.lipschitz:.10g} growth_upper={n.growth_upper:.10g}"
    if growth is not None:
        text += f" growth={'ok' if growth else 'VIOLATED'}"
    return text
