"""
Triangular Mesh - The Geometry
Conforming 2D triangulations with newest-vertex-bisection bookkeeping.

Storage convention: the refinement edge of every triangle (v0, v1, v2) is (v1, v2),
i.e. it lies opposite local vertex 0 (the newest vertex). Triangles are counter-clockwise.
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np

from exceptions import InvalidParameterError

# Relative tolerance for "equally long" edges when labeling an initial mesh
LENGTH_TIE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class Mesh:
    """
    Immutable triangulation plus refinement provenance.

    vertex_parents[i] holds the endpoints of the edge bisected to create vertex i
    (-1, -1 for initial vertices). parent[t] is the index of the triangle in the
    previous mesh that t descends from (-1 on the initial mesh).
    """
    vertices: np.ndarray
    triangles: np.ndarray
    level: np.ndarray
    parent: np.ndarray
    vertex_parents: np.ndarray
    vertex_generation: np.ndarray
    generation: int = 0

    def __post_init__(self):
        for name in ("vertices", "triangles", "level", "parent", "vertex_parents", "vertex_generation"):
            getattr(self, name).flags.writeable = False

    @classmethod
    def from_arrays(cls, vertices, triangles) -> "Mesh":
        """
        Build an initial mesh: orient triangles counter-clockwise and label the
        longest edge as refinement edge (ties broken by smallest opposite-vertex index).
        """
        vertices = np.array(vertices, dtype=float).reshape(-1, 2)
        triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise InvalidParameterError("Triangle references a vertex outside the vertex list")

        labeled = np.empty_like(triangles)
        for t, tri in enumerate(triangles):
            p = vertices[tri]
            # squared length of the edge opposite local vertex i
            lengths = np.array([np.sum((p[(i + 2) % 3] - p[(i + 1) % 3]) ** 2) for i in range(3)])
            longest = lengths.max()
            candidates = [i for i in range(3) if lengths[i] >= longest * (1.0 - LENGTH_TIE_RTOL)]
            newest = min(candidates, key=lambda i: tri[i])
            labeled[t] = np.roll(tri, -newest)

        labeled = orient_counter_clockwise(vertices, labeled)
        n_vertices, n_triangles = len(vertices), len(labeled)
        mesh = cls(
            vertices=vertices,
            triangles=labeled,
            level=np.zeros(n_triangles, dtype=np.int64),
            parent=np.full(n_triangles, -1, dtype=np.int64),
            vertex_parents=np.full((n_vertices, 2), -1, dtype=np.int64),
            vertex_generation=np.zeros(n_vertices, dtype=np.int64),
        )
        if np.any(mesh.areas <= 0):
            raise InvalidParameterError("Degenerate triangle (zero area) in initial mesh")
        return mesh

    # ==================== SIZES ====================

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    # ==================== GEOMETRY ====================

    @cached_property
    def areas(self) -> np.ndarray:
        """Signed areas (positive for counter-clockwise triangles)"""
        p0, p1, p2 = (self.vertices[self.triangles[:, i]] for i in range(3))
        d1, d2 = p1 - p0, p2 - p0
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def hat_gradients(self) -> np.ndarray:
        """(M, 3, 2) constant gradients of the three local P1 hat functions"""
        p = self.vertices[self.triangles]
        grads = np.empty((self.n_triangles, 3, 2))
        for i in range(3):
            a, b = p[:, (i + 1) % 3], p[:, (i + 2) % 3]
            grads[:, i, 0] = a[:, 1] - b[:, 1]
            grads[:, i, 1] = b[:, 0] - a[:, 0]
        return grads / (2.0 * self.areas)[:, None, None]

    @cached_property
    def diameters(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        lengths = np.linalg.norm(p[:, [1, 2, 0]] - p[:, [2, 0, 1]], axis=2)
        return lengths.max(axis=1)

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    # ==================== TOPOLOGY ====================

    @cached_property
    def _edge_topology(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        # local edge i is opposite local vertex i, so local edge 0 is the refinement edge
        local = np.stack(
            [self.triangles[:, [1, 2]], self.triangles[:, [2, 0]], self.triangles[:, [0, 1]]], axis=1
        ).reshape(-1, 2)
        local = np.sort(local, axis=1)
        if len(local) == 0:
            return np.zeros((0, 2), dtype=np.int64), np.zeros((0, 3), dtype=np.int64), np.zeros(0, dtype=np.int64)
        edges, inverse, counts = np.unique(local, axis=0, return_inverse=True, return_counts=True)
        tri_edges = inverse.reshape(-1).reshape(-1, 3)
        return edges, tri_edges, counts

    @property
    def edges(self) -> np.ndarray:
        """(E, 2) unique edges, each row sorted, rows in lexicographic order"""
        return self._edge_topology[0]

    @property
    def triangle_edges(self) -> np.ndarray:
        """(M, 3) edge index of local edge i (opposite local vertex i)"""
        return self._edge_topology[1]

    @property
    def edge_incidence(self) -> np.ndarray:
        """Number of triangles sharing each edge"""
        return self._edge_topology[2]

    @cached_property
    def edge_triangles(self) -> np.ndarray:
        """(E, 2) the triangles on both sides of each edge, -1 for the missing side of boundary edges"""
        n_edges = len(self.edges)
        ids = self.triangle_edges.reshape(-1)
        owners = np.repeat(np.arange(self.n_triangles), 3)
        order = np.argsort(ids, kind="stable")
        ids_sorted, owners_sorted = ids[order], owners[order]
        starts = np.searchsorted(ids_sorted, np.arange(n_edges))

        e2t = np.full((n_edges, 2), -1, dtype=np.int64)
        e2t[:, 0] = owners_sorted[starts]
        shared = self.edge_incidence >= 2
        e2t[shared, 1] = owners_sorted[starts[shared] + 1]
        return e2t

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        """Dirichlet edges: exactly the edges incident to one triangle"""
        return self.edges[self.edge_incidence == 1]

    @cached_property
    def boundary_vertex_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_edges.reshape(-1)] = True
        return mask

    # ==================== PROVENANCE ====================

    @cached_property
    def new_vertices(self) -> np.ndarray:
        """Vertices created by the refinement that produced this mesh"""
        if self.generation == 0:
            return np.zeros(0, dtype=np.int64)
        return np.flatnonzero(self.vertex_generation == self.generation)

    def refined_mask(self, coarse: "Mesh") -> np.ndarray:
        """Triangles of this mesh that are not triangles of `coarse` (T_h minus T_H)"""
        if self.generation != coarse.generation + 1:
            raise InvalidParameterError("Mesh is not a one-step refinement of the given coarse mesh")
        return self.level > coarse.level[self.parent]

    def coarse_refined_mask(self, coarse: "Mesh") -> np.ndarray:
        """Triangles of `coarse` that were bisected on the way to this mesh (T_H minus T_h)"""
        mask = np.zeros(coarse.n_triangles, dtype=bool)
        mask[self.parent[self.refined_mask(coarse)]] = True
        return mask


def orient_counter_clockwise(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Swap v1 and v2 of clockwise triangles; keeps the refinement edge"""
    p0, p1, p2 = (vertices[triangles[:, i]] for i in range(3))
    d1, d2 = p1 - p0, p2 - p0
    clockwise = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) < 0
    oriented = triangles.copy()
    oriented[clockwise, 1], oriented[clockwise, 2] = triangles[clockwise, 2], triangles[clockwise, 1]
    return oriented


def validate_marked(marked, n_triangles: int) -> np.ndarray:
    """Normalize a marked set to a sorted int64 array, rejecting out-of-range or repeated indices"""
    marked = np.asarray(marked, dtype=np.int64).reshape(-1)
    if marked.size == 0:
        return marked
    if marked.min() < 0 or marked.max() >= n_triangles:
        raise InvalidParameterError(f"Marked index out of range [0, {n_triangles})")
    unique = np.unique(marked)
    if unique.size != marked.size:
        raise InvalidParameterError("Marked set contains duplicate triangle indices")
    return unique


def shape_regularity(mesh: Mesh) -> float:
    """Max over triangles of diameter^2 / area"""
    return float(np.max(mesh.diameters ** 2 / mesh.areas))


def check_conformity(mesh: Mesh) -> Tuple[bool, str]:
    """
    Edge-incidence audit
    Returns: (is_conforming, reason)
    """
    if mesh.n_triangles == 0:
        return False, "Mesh has no triangles"

    if np.any(mesh.areas <= 0):
        return False, f"{int(np.sum(mesh.areas <= 0))} triangles with non-positive signed area"

    if np.any(mesh.edge_incidence > 2):
        return False, "Edge shared by more than two triangles"

    # A hanging node lies in the interior of some edge with a single neighbor,
    # and it is itself an endpoint of such an edge
    boundary = mesh.boundary_edges
    a, b = mesh.vertices[boundary[:, 0]], mesh.vertices[boundary[:, 1]]
    for v in np.unique(boundary):
        p = mesh.vertices[v]
        ab, ap = b - a, p - a
        cross = ab[:, 0] * ap[:, 1] - ab[:, 1] * ap[:, 0]
        t = np.einsum("ij,ij->i", ap, ab) / np.einsum("ij,ij->i", ab, ab)
        scale = np.linalg.norm(ab, axis=1)
        on_edge = (np.abs(cross) <= 1e-12 * scale ** 2) & (t > 1e-12) & (t < 1 - 1e-12)
        if np.any(on_edge):
            return False, f"Hanging node at vertex {int(v)}"

    used = np.unique(mesh.triangles)
    unused = np.setdiff1d(np.arange(mesh.n_vertices), used)
    if unused.size:
        return False, f"{unused.size} vertices not used by any triangle"

    return True, "Mesh is conforming"

