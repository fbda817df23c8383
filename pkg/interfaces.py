"""
Abstract Solver Interfaces - The Contract
Every linearization (Kacanov, Zarantonello, Newton) and every algebraic solver
(multigrid, direct) implements these methods, so the adaptive loop never changes
when switching methods.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Tuple, Union

import numpy as np
import scipy.sparse as sp

from fem import Discretization, FeFunction, assemble_weighted_stiffness
from nonlinearity import ScalarNonlinearity

Weight = Union[float, np.ndarray]


@dataclass(frozen=True, eq=False)
class LinearizedSystem:
    """One linearization step: matrix (u_new) = rhs"""
    matrix: sp.csr_matrix
    rhs: np.ndarray
    linearization_point: FeFunction
    method: str = ""
    weight_range: Tuple[float, float] = (np.nan, np.nan)  # extreme eigenvalues of the element weights

    @property
    def dofs(self):
        return self.linearization_point.dofs

    @property
    def n_dofs(self) -> int:
        return self.linearization_point.dofs.n_dofs


def weight_range(weight: Weight) -> Tuple[float, float]:
    """Smallest and largest eigenvalue over all element weights"""
    w = np.asarray(weight, dtype=float)
    if w.size == 0:
        return np.nan, np.nan
    if w.ndim <= 1:
        return float(w.min()), float(w.max())
    eig = np.linalg.eigvalsh(w)
    return float(eig.min()), float(eig.max())


class ILinearization(ABC):
    """
    Abstract Linearization
    A method supplies only the element weight of its bilinear form; the shared
    build_system turns it into matrix = A_W and rhs = A_W u_prev + residual(u_prev),
    whose exact solution is the next linearization iterate.
    """

    @property
    @abstractmethod
    def name(self) -> str:
        """Config string of the method, e.g. 'zarantonello:0.1667'"""
        pass

    @abstractmethod
    def element_weights(self, disc: Discretization, coefficients: np.ndarray) -> Weight:
        """
        Weight of the linearized bilinear form at the linearization point
        Returns: scalar, (M,) or (M, 2, 2)
        """
        pass

    @abstractmethod
    def coercivity_constant(self, n: ScalarNonlinearity) -> float:
        """C*_nrg with C*_nrg ||Phi(u) - u||^2 <= dl2(Phi(u), u)"""
        pass

    @abstractmethod
    def ellipticity_bounds(self, n: ScalarNonlinearity) -> Tuple[float, float]:
        """(C_ell, C_cnt) of the linearized bilinear form relative to the Laplace form"""
        pass

    def bind(self, n: ScalarNonlinearity) -> "ILinearization":
        """Validate the method parameters against a nonlinearity; may return an adjusted method"""
        return self

    def build_system(self, disc: Discretization, u_prev: FeFunction) -> LinearizedSystem:
        weight = self.element_weights(disc, u_prev.coefficients)
        matrix = assemble_weighted_stiffness(disc.dofs, weight)
        rhs = matrix @ u_prev.coefficients + disc.residual(u_prev.coefficients)
        return LinearizedSystem(
            matrix=matrix,
            rhs=rhs,
            linearization_point=u_prev,
            method=self.name,
            weight_range=weight_range(weight),
        )

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r})"


@dataclass
class SolverStats:
    """Measured a-norm behaviour of an algebraic solver"""
    error_proxies: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    steps: int = 0

    def record(self, error_before: float, error_after: float, floor: float = 0.0):
        """Ratios are only recorded when the previous error exceeds `floor` (default: is nonzero)"""
        self.steps += 1
        self.error_proxies.append(error_after)
        if error_before > floor:
            self.ratios.append(error_after / error_before)

    def merge(self, other: "SolverStats"):
        self.error_proxies.extend(other.error_proxies)
        self.ratios.extend(other.ratios)
        self.steps += other.steps


class IAlgebraicSolver(ABC):
    """
    Abstract Algebraic Solver
    one_step is the contractive solver step Psi of the inner loop.
    """

    stats: SolverStats

    @abstractmethod
    def one_step(self, system: LinearizedSystem, iterate: FeFunction) -> FeFunction:
        """One solver step from `iterate` towards the exact solution of `system`"""
        pass

    @abstractmethod
    def direct_solve(self, system: LinearizedSystem) -> FeFunction:
        """Reference solution by sparse factorization"""
        pass
