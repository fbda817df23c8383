"""
Local Multigrid - The Contractive Algebraic Solver
Multiplicative V-cycle over the bisection hierarchy. Level l smooths only on the
vertices whose hat function changed in refinement l (new vertices and the endpoints
of their bisected edges), one forward Gauss-Seidel sweep before and one backward
sweep after the coarse correction; level 0 is solved exactly. Coarse operators are
Galerkin products P^T A P, so the error propagator is a-self-adjoint and contracts
in the a-norm for every SPD system.
"""
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular

import config
from exceptions import InsufficientDataError, InvalidParameterError
from fem import DofMap, FeFunction, prolongation_matrix
from interfaces import IAlgebraicSolver, LinearizedSystem, SolverStats
from meshing import Mesh
from solvers.direct import Factorization, direct_solve
from utils.logger import setup_logger

logger = setup_logger("ailfem.multigrid")


class MultilevelHierarchy:
    """Nested P1 spaces of T_0, ..., T_L with prolongations and local smoothing sets"""

    def __init__(self, mesh0: Mesh):
        self.dofmaps: List[DofMap] = [DofMap.from_mesh(mesh0)]
        self.prolongations: List[Optional[sp.csr_matrix]] = [None]
        self.smoothing_sets: List[Optional[np.ndarray]] = [None]

    @property
    def n_levels(self) -> int:
        return len(self.dofmaps)

    @property
    def finest(self) -> DofMap:
        return self.dofmaps[-1]

    def extend(self, mesh: Mesh) -> DofMap:
        """Append the refinement `mesh` of the finest level; no-op for the finest mesh itself"""
        if mesh is self.finest.mesh:
            return self.finest
        coarse = self.finest
        fine = DofMap.from_mesh(mesh)
        # raises unless mesh is one refine() of the finest mesh
        prolongation = prolongation_matrix(coarse, fine)

        new = mesh.new_vertices
        changed = np.unique(np.concatenate([new, mesh.vertex_parents[new].reshape(-1)]))
        smoothing = fine.vertex_to_dof[changed]
        smoothing = np.sort(smoothing[smoothing >= 0])

        self.dofmaps.append(fine)
        self.prolongations.append(prolongation)
        self.smoothing_sets.append(smoothing)
        logger.debug(f"Hierarchy level {self.n_levels - 1}: {fine.n_dofs} dofs, {len(smoothing)} smoothed")
        return fine

    def level_of(self, mesh: Mesh) -> int:
        for level in range(self.n_levels - 1, -1, -1):
            if self.dofmaps[level].mesh is mesh:
                return level
        raise InvalidParameterError("System mesh is not part of the multilevel hierarchy")

    def coverage(self) -> bool:
        """Every finest dof is a level-0 dof or smoothed on some level"""
        finest = self.finest
        generation = finest.mesh.vertex_generation[finest.dof_to_vertex]
        covered = generation == 0
        for level in range(1, self.n_levels):
            smoothed = self.dofmaps[level].dof_to_vertex[self.smoothing_sets[level]]
            covered |= np.isin(finest.dof_to_vertex, smoothed)
        return bool(np.all(covered))


class _LevelOperators:
    """Galerkin operators and smoother factors for one system"""

    def __init__(self, hierarchy: MultilevelHierarchy, matrix: sp.csr_matrix, top: int):
        self.top = top
        self.matrices: List[sp.csr_matrix] = [None] * (top + 1)
        self.lower: List[Optional[sp.csr_matrix]] = [None] * (top + 1)
        self.upper: List[Optional[sp.csr_matrix]] = [None] * (top + 1)

        current = sp.csr_matrix(matrix)
        for level in range(top, 0, -1):
            self.matrices[level] = current
            block = current[hierarchy.smoothing_sets[level]][:, hierarchy.smoothing_sets[level]]
            self.lower[level] = sp.tril(block, format="csr")
            self.upper[level] = sp.triu(block, format="csr")
            p = hierarchy.prolongations[level]
            current = (p.T @ current @ p).tocsr()
        self.matrices[0] = current
        self.coarse = Factorization(current)


class MultigridSolver(IAlgebraicSolver):
    """
    One call of one_step = one V-cycle on the residual of the current iterate.
    When measure is on, the a-norm error before and after every step is taken
    against a cached direct solution and recorded in stats.
    """

    def __init__(
        self,
        hierarchy: MultilevelHierarchy,
        measure: bool = config.MEASURE_CONTRACTION,
        measure_max_dofs: int = config.MEASURE_CONTRACTION_MAX_DOFS,
    ):
        self.hierarchy = hierarchy
        self.measure = measure
        self.measure_max_dofs = measure_max_dofs
        self.stats = SolverStats()
        self._system: Optional[LinearizedSystem] = None
        self._operators: Optional[_LevelOperators] = None
        self._reference: Optional[np.ndarray] = None

    def _prepare(self, system: LinearizedSystem):
        if system is self._system:
            return
        top = self.hierarchy.level_of(system.dofs.mesh)
        if self.hierarchy.dofmaps[top].n_dofs != system.n_dofs:
            raise InvalidParameterError("System size does not match its hierarchy level")
        self._operators = _LevelOperators(self.hierarchy, system.matrix, top)
        self._system = system
        self._reference = None
        if self.measure and 0 < system.n_dofs <= self.measure_max_dofs:
            self._reference = direct_solve(system).coefficients

    def _cycle(self, level: int, residual: np.ndarray) -> np.ndarray:
        ops = self._operators
        if level == 0:
            return ops.coarse.solve(residual)

        matrix = ops.matrices[level]
        smoothing = self.hierarchy.smoothing_sets[level]
        correction = np.zeros_like(residual)

        if len(smoothing):
            correction[smoothing] = spsolve_triangular(ops.lower[level], residual[smoothing], lower=True)

        p = self.hierarchy.prolongations[level]
        defect = residual - matrix @ correction
        correction += p @ self._cycle(level - 1, p.T @ defect)

        if len(smoothing):
            defect = residual - matrix @ correction
            correction[smoothing] += spsolve_triangular(ops.upper[level], defect[smoothing], lower=False)
        return correction

    def _a_norm(self, vector: np.ndarray) -> float:
        return float(np.sqrt(max(vector @ (self._system.matrix @ vector), 0.0)))

    def one_step(self, system: LinearizedSystem, iterate: FeFunction) -> FeFunction:
        if len(iterate.coefficients) != system.n_dofs:
            raise InvalidParameterError(
                f"Iterate has {len(iterate.coefficients)} dofs, system has {system.n_dofs}"
            )
        self._prepare(system)
        u = iterate.coefficients
        if system.n_dofs == 0:
            self.stats.steps += 1
            return FeFunction(system.dofs, u)

        residual = system.rhs - system.matrix @ u
        updated = u + self._cycle(self._operators.top, residual)

        if self._reference is not None:
            self.stats.record(
                self._a_norm(u - self._reference),
                self._a_norm(updated - self._reference),
                floor=config.CONTRACTION_FLOOR * self._a_norm(self._reference),
            )
        else:
            self.stats.steps += 1
        return FeFunction(system.dofs, updated)

    def direct_solve(self, system: LinearizedSystem) -> FeFunction:
        return direct_solve(system)


def one_step(hierarchy: MultilevelHierarchy, system: LinearizedSystem, iterate: FeFunction) -> FeFunction:
    """Single unmeasured V-cycle"""
    return MultigridSolver(hierarchy, measure=False).one_step(system, iterate)


def estimate_contraction(stats: SolverStats) -> float:
    """Largest measured a-norm error ratio"""
    if not stats.ratios:
        raise InsufficientDataError("No contraction ratios recorded")
    return float(max(stats.ratios))
