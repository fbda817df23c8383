"""
Residual Error Estimator - The Indicators
eta_T^2 = |T|^2 f_bar_T^2 + |T|^(1/2) sum_{interior e in dT} |e| [[(A(grad u) - f_vec_bar) . n]]_e^2

f and f_vec enter through their elementwise mean values, so the volume residual and
the jumps are constant per element and per edge and their integrals are exact.
"""
from dataclasses import dataclass

import numpy as np

from exceptions import InvalidParameterError
from fem import Discretization, DofMap, FeFunction
from meshing import Mesh, validate_marked
from nonlinearity import ScalarNonlinearity, flux
from problems import ProblemData


@dataclass(frozen=True, eq=False)
class IndicatorField:
    """Squared local indicators eta_T^2, one per triangle of `mesh`"""
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if len(values) != self.mesh.n_triangles:
            raise InvalidParameterError(
                f"{len(values)} indicators for a mesh with {self.mesh.n_triangles} triangles"
            )
        if np.any(values < 0):
            raise InvalidParameterError("Squared indicators must be nonnegative")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)


def element_indicators(disc: Discretization, coefficients: np.ndarray) -> np.ndarray:
    """(M,) squared indicators of the P1 function with the given coefficients"""
    mesh = disc.mesh
    areas = mesh.areas
    f_bar, fvec_bar = disc.data_projection

    # P1 flux is elementwise constant: its divergence vanishes
    volume = areas * areas * f_bar * f_bar

    sigma = flux(disc.nonlinearity, disc.gradients(coefficients)) - fvec_bar
    edges = mesh.edges
    e2t = mesh.edge_triangles
    interior = e2t[:, 1] >= 0
    left, right = e2t[interior, 0], e2t[interior, 1]

    tangent = mesh.vertices[edges[interior, 1]] - mesh.vertices[edges[interior, 0]]
    length = np.hypot(tangent[:, 0], tangent[:, 1])
    normal = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1) / length[:, None]
    jump = np.sum((sigma[left] - sigma[right]) * normal, axis=1)
    edge_term = jump * jump * length

    jump_sum = np.bincount(left, weights=edge_term, minlength=mesh.n_triangles)
    jump_sum += np.bincount(right, weights=edge_term, minlength=mesh.n_triangles)
    return volume + np.sqrt(areas) * jump_sum


def indicators(dofs: DofMap, data: ProblemData, n: ScalarNonlinearity, u: FeFunction) -> IndicatorField:
    if u.dofs is not dofs:
        raise InvalidParameterError("indicators: function does not live on the given dof map")
    disc = Discretization(dofs, data, n)
    return IndicatorField(dofs.mesh, element_indicators(disc, u.coefficients))


def total(ind: IndicatorField) -> float:
    """eta = (sum_T eta_T^2)^(1/2)"""
    return float(np.sqrt(ind.values.sum()))


def restricted(ind: IndicatorField, subset) -> float:
    """eta(U) = (sum_{T in U} eta_T^2)^(1/2)"""
    idx = validate_marked(subset, ind.mesh.n_triangles)
    return float(np.sqrt(ind.values[idx].sum()))
