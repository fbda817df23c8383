"""
P1 Finite Elements - The Discretization
Dof mapping, weighted stiffness assembly, load functional, nonlinear residual,
energy, norms, interpolation, exact error and the P1 transfer between nested meshes.

Gradients of P1 functions are elementwise constant, so every elementwise-constant
weight is integrated exactly. Loads and exact errors use a 7-point degree-5 rule.
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Tuple, Union

import numpy as np
import scipy.sparse as sp

from exceptions import InvalidParameterError, MissingExactSolutionError, NonFiniteError
from meshing import Mesh
from nonlinearity import ScalarNonlinearity, energy_density, flux
from problems import ProblemData

# ==================== QUADRATURE ====================
# Symmetric 7-point rule, exact for polynomials of degree 5 (barycentric coordinates)
_SQ15 = np.sqrt(15.0)
_A1, _B1 = (6.0 - _SQ15) / 21.0, (9.0 + 2.0 * _SQ15) / 21.0
_A2, _B2 = (6.0 + _SQ15) / 21.0, (9.0 - 2.0 * _SQ15) / 21.0
_W1, _W2 = (155.0 - _SQ15) / 1200.0, (155.0 + _SQ15) / 1200.0

QUAD_BARY = np.array([
    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    [_A1, _A1, _B1], [_A1, _B1, _A1], [_B1, _A1, _A1],
    [_A2, _A2, _B2], [_A2, _B2, _A2], [_B2, _A2, _A2],
])
QUAD_WEIGHTS = np.array([9.0 / 40.0, _W1, _W1, _W1, _W2, _W2, _W2])

Weight = Union[float, np.ndarray]


def quadrature_points(mesh: Mesh) -> np.ndarray:
    """(M, 7, 2) physical quadrature points"""
    return np.einsum("qi,tia->tqa", QUAD_BARY, mesh.vertices[mesh.triangles])


# ==================== DOFS AND FUNCTIONS ====================

@dataclass(frozen=True, eq=False)
class DofMap:
    """Dofs are the interior (non-Dirichlet) vertices in vertex-index order"""
    mesh: Mesh
    vertex_to_dof: np.ndarray
    dof_to_vertex: np.ndarray

    @classmethod
    def from_mesh(cls, mesh: Mesh) -> "DofMap":
        dof_to_vertex = np.flatnonzero(~mesh.boundary_vertex_mask)
        vertex_to_dof = np.full(mesh.n_vertices, -1, dtype=np.int64)
        vertex_to_dof[dof_to_vertex] = np.arange(len(dof_to_vertex))
        return cls(mesh=mesh, vertex_to_dof=vertex_to_dof, dof_to_vertex=dof_to_vertex)

    @property
    def n_dofs(self) -> int:
        return len(self.dof_to_vertex)

    @cached_property
    def local_dofs(self) -> np.ndarray:
        """(M, 3) dof of each local vertex, -1 on the Dirichlet boundary"""
        return self.vertex_to_dof[self.mesh.triangles]

    def scatter(self, local: np.ndarray) -> np.ndarray:
        """Sum (M, 3) local contributions into a dof vector"""
        keep = self.local_dofs >= 0
        return np.bincount(self.local_dofs[keep], weights=local[keep], minlength=self.n_dofs)

    def element_gradients(self, coefficients: np.ndarray) -> np.ndarray:
        """(M, 2) gradient of the P1 function with the given coefficients"""
        nodal = np.zeros(self.mesh.n_vertices)
        nodal[self.dof_to_vertex] = coefficients
        return np.einsum("ti,tia->ta", nodal[self.mesh.triangles], self.mesh.hat_gradients)


@dataclass(frozen=True, eq=False)
class FeFunction:
    """Coefficients over the dofs; Dirichlet vertices are implicitly zero"""
    dofs: DofMap
    coefficients: np.ndarray

    def __post_init__(self):
        coefficients = np.array(self.coefficients, dtype=float).reshape(-1)
        if len(coefficients) != self.dofs.n_dofs:
            raise InvalidParameterError(
                f"Coefficient length {len(coefficients)} does not match dof count {self.dofs.n_dofs}"
            )
        coefficients.flags.writeable = False
        object.__setattr__(self, "coefficients", coefficients)

    @classmethod
    def zeros(cls, dofs: DofMap) -> "FeFunction":
        return cls(dofs, np.zeros(dofs.n_dofs))

    def nodal_values(self) -> np.ndarray:
        nodal = np.zeros(self.dofs.mesh.n_vertices)
        nodal[self.dofs.dof_to_vertex] = self.coefficients
        return nodal

    def gradients(self) -> np.ndarray:
        return self.dofs.element_gradients(self.coefficients)

    def _check_same_space(self, other: "FeFunction"):
        if other.dofs is not self.dofs:
            raise InvalidParameterError("FeFunctions live on different dof maps")

    def __add__(self, other: "FeFunction") -> "FeFunction":
        self._check_same_space(other)
        return FeFunction(self.dofs, self.coefficients + other.coefficients)

    def __sub__(self, other: "FeFunction") -> "FeFunction":
        self._check_same_space(other)
        return FeFunction(self.dofs, self.coefficients - other.coefficients)

    def __mul__(self, scale: float) -> "FeFunction":
        return FeFunction(self.dofs, float(scale) * self.coefficients)

    __rmul__ = __mul__


# ==================== ASSEMBLY KERNEL ====================

def _normalize_weight(weight: Weight, n_triangles: int) -> np.ndarray:
    """Validate a scalar, (M,) or (M, 2, 2) / (2, 2) weight; returns it as an array"""
    w = np.asarray(weight, dtype=float)
    if not np.all(np.isfinite(w)):
        raise NonFiniteError("Stiffness weight contains non-finite values")

    if w.ndim == 0 or w.shape == (n_triangles,):
        if np.any(w <= 0):
            raise InvalidParameterError("Scalar stiffness weight must be positive")
        return w

    if w.shape == (2, 2):
        w = np.broadcast_to(w, (n_triangles, 2, 2))
    if w.shape != (n_triangles, 2, 2):
        raise InvalidParameterError(f"Weight shape {w.shape} is neither scalar, (M,) nor (M, 2, 2)")

    scale = max(1.0, float(np.abs(w).max())) if w.size else 1.0
    if np.any(np.abs(w[:, 0, 1] - w[:, 1, 0]) > 1e-12 * scale):
        raise InvalidParameterError("Stiffness weight matrix is not symmetric")
    det = w[:, 0, 0] * w[:, 1, 1] - w[:, 0, 1] * w[:, 1, 0]
    if np.any(w[:, 0, 0] <= 0) or np.any(det <= 0):
        raise InvalidParameterError("Stiffness weight matrix is not positive definite")
    return w


def _local_stiffness(mesh: Mesh, w: np.ndarray) -> np.ndarray:
    grads = mesh.hat_gradients
    if w.ndim <= 1:
        local = np.einsum("tia,tja->tij", grads, grads)
        local *= (w * mesh.areas)[..., None, None] if w.ndim == 1 else w * mesh.areas[:, None, None]
        return local
    return np.einsum("tia,tab,tjb->tij", grads, w, grads) * mesh.areas[:, None, None]


def _assemble(dofs: DofMap, local: np.ndarray) -> sp.csr_matrix:
    n = dofs.n_dofs
    ld = dofs.local_dofs
    rows = np.broadcast_to(ld[:, :, None], local.shape)
    cols = np.broadcast_to(ld[:, None, :], local.shape)
    keep = (rows >= 0) & (cols >= 0)
    matrix = sp.coo_matrix((local[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    # bitwise symmetric: a_ij + a_ji == a_ji + a_ij
    matrix = (0.5 * (matrix + matrix.T)).tocsr()
    matrix.sort_indices()
    return matrix


def assemble_weighted_stiffness(dofs: DofMap, weight: Weight) -> sp.csr_matrix:
    """A_ij = sum_T grad phi_i . W_T grad phi_j |T|"""
    w = _normalize_weight(weight, dofs.mesh.n_triangles)
    return _assemble(dofs, _local_stiffness(dofs.mesh, w))


# ==================== PROBLEM-DEPENDENT QUANTITIES ====================

class Discretization:
    """
    One mesh, one problem: caches the dof map, load vector, Laplace stiffness and
    the P0 data projections; evaluates energy, residual and norms on coefficient vectors.
    """

    def __init__(self, dofs: DofMap, data: ProblemData, nonlinearity: ScalarNonlinearity):
        self.dofs = dofs
        self.mesh = dofs.mesh
        self.data = data
        self.nonlinearity = nonlinearity

    @classmethod
    def for_mesh(cls, mesh: Mesh, data: ProblemData, nonlinearity: ScalarNonlinearity) -> "Discretization":
        return cls(DofMap.from_mesh(mesh), data, nonlinearity)

    @property
    def n_dofs(self) -> int:
        return self.dofs.n_dofs

    # ---------- cached data ----------

    @cached_property
    def quadrature_points(self) -> np.ndarray:
        return quadrature_points(self.mesh)

    @cached_property
    def _data_at_quadrature(self) -> Tuple[np.ndarray, np.ndarray]:
        f_vals = np.asarray(self.data.f(self.quadrature_points), dtype=float)
        fvec_vals = np.asarray(self.data.f_vec(self.quadrature_points), dtype=float)
        if not (np.all(np.isfinite(f_vals)) and np.all(np.isfinite(fvec_vals))):
            raise NonFiniteError(f"Problem data '{self.data.name}' is not finite at quadrature points")
        return f_vals, fvec_vals

    @cached_property
    def data_projection(self) -> Tuple[np.ndarray, np.ndarray]:
        """Elementwise L2 projections onto constants: (f_bar (M,), f_vec_bar (M, 2))"""
        f_vals, fvec_vals = self._data_at_quadrature
        return f_vals @ QUAD_WEIGHTS, np.einsum("q,tqa->ta", QUAD_WEIGHTS, fvec_vals)

    @cached_property
    def load_vector(self) -> np.ndarray:
        """F(phi_i) for every dof"""
        f_vals, _ = self._data_at_quadrature
        _, fvec_bar = self.data_projection
        areas = self.mesh.areas
        local = areas[:, None] * ((f_vals * QUAD_WEIGHTS) @ QUAD_BARY)
        local += areas[:, None] * np.einsum("ta,tia->ti", fvec_bar, self.mesh.hat_gradients)
        return self.dofs.scatter(local)

    @cached_property
    def laplace_stiffness(self) -> sp.csr_matrix:
        """Weight-one stiffness; its quadratic form is the squared energy norm"""
        return assemble_weighted_stiffness(self.dofs, 1.0)

    # ---------- evaluation ----------

    def function(self, coefficients: np.ndarray) -> FeFunction:
        return FeFunction(self.dofs, coefficients)

    def gradients(self, coefficients: np.ndarray) -> np.ndarray:
        return self.dofs.element_gradients(coefficients)

    def energy(self, coefficients: np.ndarray) -> float:
        """E(u) = sum_T |T| M(|grad u|^2) / 2 - F(u)"""
        g = self.gradients(coefficients)
        return float(np.dot(self.mesh.areas, energy_density(self.nonlinearity, g))
                     - np.dot(self.load_vector, coefficients))

    def residual(self, coefficients: np.ndarray) -> np.ndarray:
        """F(phi_i) - <A(grad u), grad phi_i>"""
        g = self.gradients(coefficients)
        local = self.mesh.areas[:, None] * np.einsum(
            "ta,tia->ti", flux(self.nonlinearity, g), self.mesh.hat_gradients
        )
        return self.load_vector - self.dofs.scatter(local)

    def norm(self, coefficients: np.ndarray) -> float:
        """||grad u||_{L2}"""
        g = self.gradients(coefficients)
        return float(np.sqrt(np.dot(self.mesh.areas, np.sum(g * g, axis=1))))

    def exact_error(self, coefficients: np.ndarray) -> float:
        if self.data.exact_gradient is None:
            raise MissingExactSolutionError(f"Problem '{self.data.name}' has no exact gradient")
        exact = np.asarray(self.data.exact_gradient(self.quadrature_points), dtype=float)
        diff = exact - self.gradients(coefficients)[:, None, :]
        per_element = np.sum(diff * diff, axis=2) @ QUAD_WEIGHTS
        return float(np.sqrt(np.dot(self.mesh.areas, per_element)))


# ==================== MODULE-LEVEL OPERATIONS ====================

def assemble_load(dofs: DofMap, data: ProblemData) -> np.ndarray:
    # the load does not depend on the nonlinearity
    return Discretization(dofs, data, nonlinearity=None).load_vector


def nonlinear_residual(dofs: DofMap, data: ProblemData, n: ScalarNonlinearity, u: FeFunction) -> np.ndarray:
    return Discretization(dofs, data, n).residual(u.coefficients)


def energy(dofs: DofMap, data: ProblemData, n: ScalarNonlinearity, u: FeFunction) -> float:
    return Discretization(dofs, data, n).energy(u.coefficients)


def energy_difference(v: FeFunction, w: FeFunction, data: ProblemData, n: ScalarNonlinearity) -> float:
    """dl2(v, w) = E(w) - E(v), computed as a single subtraction"""
    if v.dofs is not w.dofs:
        raise InvalidParameterError("energy_difference needs both functions on the same dof map")
    disc = Discretization(v.dofs, data, n)
    return disc.energy(w.coefficients) - disc.energy(v.coefficients)


def energy_norm(u: FeFunction) -> float:
    g = u.gradients()
    return float(np.sqrt(np.dot(u.dofs.mesh.areas, np.sum(g * g, axis=1))))


def interpolate(dofs: DofMap, g: Callable[[np.ndarray], np.ndarray]) -> FeFunction:
    """Nodal interpolant at the interior vertices"""
    values = np.asarray(g(dofs.mesh.vertices[dofs.dof_to_vertex]), dtype=float).reshape(-1)
    if not np.all(np.isfinite(values)):
        raise NonFiniteError("Interpolated function is not finite at all interior vertices")
    return FeFunction(dofs, values)


def exact_error(dofs: DofMap, data: ProblemData, n: ScalarNonlinearity, u: FeFunction) -> float:
    """||grad u* - grad u||_{L2} by elementwise quadrature"""
    return Discretization(dofs, data, n).exact_error(u.coefficients)


# ==================== TRANSFER ====================

def prolongation_matrix(coarse: DofMap, fine: DofMap) -> sp.csr_matrix:
    """
    Exact P1 embedding of the coarse space into the fine one. The fine mesh must come
    from a single refine() of the coarse mesh: new vertices take the mean of their parent edge.
    """
    if fine.mesh is coarse.mesh:
        return sp.identity(coarse.n_dofs, format="csr")

    n_coarse = coarse.mesh.n_vertices
    parents = fine.mesh.vertex_parents[n_coarse:]
    if (fine.mesh.generation != coarse.mesh.generation + 1
            or fine.mesh.n_vertices < n_coarse
            or np.any(parents < 0) or np.any(parents >= n_coarse)):
        raise InvalidParameterError("Fine mesh is not a single refinement of the coarse mesh")

    fine_vertices = fine.dof_to_vertex
    fine_dofs = np.arange(fine.n_dofs)
    old = fine_vertices < n_coarse

    rows = [fine_dofs[old]]
    cols = [coarse.vertex_to_dof[fine_vertices[old]]]
    vals = [np.ones(int(old.sum()))]
    new_parents = fine.mesh.vertex_parents[fine_vertices[~old]]
    for side in range(2):
        rows.append(fine_dofs[~old])
        cols.append(coarse.vertex_to_dof[new_parents[:, side]])
        vals.append(np.full(int((~old).sum()), 0.5))

    rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    keep = cols >= 0
    return sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(fine.n_dofs, coarse.n_dofs))


def prolongate(u: FeFunction, fine: DofMap) -> FeFunction:
    """Nested-iteration transfer: the same function, written in the fine basis"""
    return FeFunction(fine, prolongation_matrix(u.dofs, fine) @ u.coefficients)
