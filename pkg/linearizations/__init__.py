"""
Linearizations - The Iteration Maps Phi
Method strings: "kacanov" | "zarantonello:<delta>" | "newton:<delta>" (newton alone uses the default damping).
"""
from typing import Optional, Tuple

import numpy as np

import config
from exceptions import InvalidParameterError, UnknownNameError
from fem import Discretization, DofMap, FeFunction
from interfaces import ILinearization, LinearizedSystem
from linearizations.kacanov import Kacanov
from linearizations.newton import DampedNewton, admissible_delta
from linearizations.zarantonello import Zarantonello
from nonlinearity import ScalarNonlinearity
from problems import ProblemData
from solvers.direct import direct_solve
from utils.logger import setup_logger

logger = setup_logger("ailfem.linearize")

METHODS = ("kacanov", "zarantonello", "newton")


def parse_method(text: str) -> ILinearization:
    name, _, arg = str(text).strip().partition(":")
    name = name.lower()
    if name not in METHODS:
        raise UnknownNameError(f"Unknown linearization '{text}'. Choose from {list(METHODS)}")

    if name == "kacanov":
        if arg:
            raise InvalidParameterError("kacanov takes no parameter")
        return Kacanov()

    if not arg:
        if name == "newton":
            return DampedNewton()
        raise InvalidParameterError("zarantonello needs a damping: 'zarantonello:<delta>'")
    try:
        delta = float(arg)
    except ValueError:
        raise InvalidParameterError(f"Damping '{arg}' is not a number") from None
    return Zarantonello(delta) if name == "zarantonello" else DampedNewton(delta)


def _as_method(method) -> ILinearization:
    return parse_method(method) if isinstance(method, str) else method


def build_system(method, dofs: DofMap, data: ProblemData, n: ScalarNonlinearity, u_prev: FeFunction) -> LinearizedSystem:
    if u_prev.dofs is not dofs:
        raise InvalidParameterError("build_system: linearization point lives on another dof map")
    return _as_method(method).bind(n).build_system(Discretization(dofs, data, n), u_prev)


def exact_step(method, dofs: DofMap, data: ProblemData, n: ScalarNonlinearity, u_prev: FeFunction) -> FeFunction:
    """Phi(u_prev) by direct factorization"""
    return direct_solve(build_system(method, dofs, data, n, u_prev))


def coercivity_constant(method, n: ScalarNonlinearity) -> float:
    return _as_method(method).bind(n).coercivity_constant(n)


def ellipticity_bounds(method, n: ScalarNonlinearity) -> Tuple[float, float]:
    return _as_method(method).bind(n).ellipticity_bounds(n)


def oversolve(
    disc: Discretization,
    u0: Optional[FeFunction] = None,
    tol: float = config.OVERSOLVE_TOL,
    max_steps: int = config.OVERSOLVE_MAX_STEPS,
) -> FeFunction:
    """
    Reference discrete solution u_H* of the nonlinear Galerkin problem.
    Kacanov steps until the energy settles, then undamped Newton steps (falling back
    to Kacanov whenever Newton would raise the energy) until the energy decrease is
    below tol |E| or the residual vanishes to round-off.
    """
    u = FeFunction.zeros(disc.dofs) if u0 is None else u0
    if disc.n_dofs == 0:
        return u

    kacanov, newton = Kacanov(), DampedNewton(1.0)
    load_scale = max(float(np.linalg.norm(disc.load_vector)), np.finfo(float).tiny)
    energy = disc.energy(u.coefficients)
    polishing = False

    for step in range(1, max_steps + 1):
        candidate = direct_solve((newton if polishing else kacanov).build_system(disc, u))
        candidate_energy = disc.energy(candidate.coefficients)
        if polishing and candidate_energy > energy:
            polishing = False
            candidate = direct_solve(kacanov.build_system(disc, u))
            candidate_energy = disc.energy(candidate.coefficients)

        decrease = energy - candidate_energy
        if candidate_energy <= energy:
            u, energy = candidate, candidate_energy
        scale = max(abs(energy), np.finfo(float).tiny)

        residual = float(np.linalg.norm(disc.residual(u.coefficients)))
        if decrease <= tol * scale or residual <= 1e-13 * load_scale:
            logger.debug(f"oversolve: {step} steps, E={energy:.15g}, |res|={residual:.3e}")
            return u
        if not polishing and decrease <= 1e-8 * scale:
            polishing = True

    logger.warning(f"oversolve: no convergence within {max_steps} steps (E={energy:.15g})")
    return u


__all__ = [
    "ILinearization", "Kacanov", "Zarantonello", "DampedNewton", "admissible_delta",
    "METHODS", "parse_method", "build_system", "exact_step",
    "coercivity_constant", "ellipticity_bounds", "oversolve",
]
