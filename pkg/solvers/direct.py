"""
Direct Solver - The Reference Oracle
Sparse LU factorization of the linearized system. Used as the exact linearization
step, as the level-0 solve of the multigrid cycle and as the measurement reference.
"""
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from exceptions import FactorizationError
from fem import FeFunction
from interfaces import IAlgebraicSolver, LinearizedSystem, SolverStats


class Factorization:
    """splu wrapper that also accepts the empty system"""

    def __init__(self, matrix: sp.spmatrix):
        self.n = matrix.shape[0]
        self._lu = None
        if self.n == 0:
            return
        if not np.all(np.isfinite(matrix.data)):
            raise FactorizationError("Matrix has non-finite entries")
        try:
            self._lu = splu(sp.csc_matrix(matrix))
        except RuntimeError as e:
            raise FactorizationError(f"Sparse LU failed: {e}") from e

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.n == 0:
            return np.zeros(0)
        x = self._lu.solve(np.asarray(rhs, dtype=float))
        if not np.all(np.isfinite(x)):
            raise FactorizationError("Sparse LU produced non-finite values (singular system)")
        return x


def direct_solve(system: LinearizedSystem) -> FeFunction:
    return FeFunction(system.dofs, Factorization(system.matrix).solve(system.rhs))


class DirectSolver(IAlgebraicSolver):
    """
    Exact solve as the algebraic step
    Repeated steps on the same system return the cached solution, so j > 1 adds zero increments.
    """

    def __init__(self):
        self.stats = SolverStats()
        self._system = None
        self._solution = None

    def one_step(self, system: LinearizedSystem, iterate: FeFunction) -> FeFunction:
        if system is not self._system:
            self._system = system
            self._solution = direct_solve(system)
        self.stats.steps += 1
        return self._solution

    def direct_solve(self, system: LinearizedSystem) -> FeFunction:
        return direct_solve(system)
