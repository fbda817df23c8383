"""
Newest Vertex Bisection - The Refiner
Marked triangles get their refinement edge bisected once; closure then bisects
whatever else is needed to keep the mesh conforming.
"""
from typing import Tuple

import numpy as np

from meshing.mesh import Mesh, validate_marked
from utils.logger import setup_logger

logger = setup_logger("ailfem.mesh")


def _closure(mesh: Mesh, marked: np.ndarray) -> np.ndarray:
    """
    Mark refinement edges of marked triangles, then propagate: every triangle with any
    marked edge must have its refinement edge marked as well.
    Returns: boolean edge mask
    """
    tri_edges = mesh.triangle_edges
    edge_marked = np.zeros(len(mesh.edges), dtype=bool)
    edge_marked[tri_edges[marked, 0]] = True

    while True:
        touched = edge_marked[tri_edges].any(axis=1)
        missing = touched & ~edge_marked[tri_edges[:, 0]]
        if not missing.any():
            return edge_marked
        edge_marked[tri_edges[missing, 0]] = True


def _bisect_round(
    triangles: np.ndarray,
    level: np.ndarray,
    origin: np.ndarray,
    edge_keys: np.ndarray,
    midpoint_ids: np.ndarray,
    key_base: int,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Bisect every triangle whose refinement edge is in `edge_keys`.
    (v0, v1, v2) with midpoint m of (v1, v2) becomes (m, v0, v1) and (m, v2, v0);
    children take their place in order so the output stays deterministic.
    """
    if len(edge_keys) == 0 or len(triangles) == 0:
        return triangles, level, origin

    a = np.minimum(triangles[:, 1], triangles[:, 2])
    b = np.maximum(triangles[:, 1], triangles[:, 2])
    keys = a * key_base + b
    pos = np.minimum(np.searchsorted(edge_keys, keys), len(edge_keys) - 1)
    hit = edge_keys[pos] == keys
    if not hit.any():
        return triangles, level, origin

    width = 1 + hit.astype(np.int64)
    start = np.concatenate([[0], np.cumsum(width)[:-1]])
    total = int(width.sum())

    out_tris = np.empty((total, 3), dtype=np.int64)
    out_level = np.empty(total, dtype=np.int64)
    out_origin = np.empty(total, dtype=np.int64)

    keep = ~hit
    out_tris[start[keep]] = triangles[keep]
    out_level[start[keep]] = level[keep]
    out_origin[start[keep]] = origin[keep]

    t = triangles[hit]
    m = midpoint_ids[pos[hit]]
    first, second = start[hit], start[hit] + 1
    out_tris[first] = np.column_stack([m, t[:, 0], t[:, 1]])
    out_tris[second] = np.column_stack([m, t[:, 2], t[:, 0]])
    out_level[first] = out_level[second] = level[hit] + 1
    out_origin[first] = out_origin[second] = origin[hit]
    return out_tris, out_level, out_origin


def refine(mesh: Mesh, marked) -> Mesh:
    """
    Coarsest NVB refinement in which every marked triangle is bisected at least once.
    Existing vertex indices are preserved; new vertices are appended.
    """
    marked = validate_marked(marked, mesh.n_triangles)
    if marked.size == 0:
        return mesh

    edge_marked = _closure(mesh, marked)
    split_edges = mesh.edges[edge_marked]
    n_old = mesh.n_vertices
    midpoint_ids = n_old + np.arange(len(split_edges), dtype=np.int64)
    # mesh.edges rows are sorted lexicographically, so the keys come out ascending
    edge_keys = split_edges[:, 0] * n_old + split_edges[:, 1]

    triangles = mesh.triangles
    level = mesh.level
    origin = np.arange(mesh.n_triangles, dtype=np.int64)
    # Round one bisects refinement edges; round two bisects children whose refinement
    # edge (a former side of the parent) was marked by the closure.
    for _ in range(2):
        triangles, level, origin = _bisect_round(triangles, level, origin, edge_keys, midpoint_ids, n_old)

    midpoints = 0.5 * (mesh.vertices[split_edges[:, 0]] + mesh.vertices[split_edges[:, 1]])
    generation = mesh.generation + 1
    refined = Mesh(
        vertices=np.vstack([mesh.vertices, midpoints]),
        triangles=triangles,
        level=level,
        parent=origin,
        vertex_parents=np.vstack([mesh.vertex_parents, split_edges]),
        vertex_generation=np.concatenate(
            [mesh.vertex_generation, np.full(len(split_edges), generation, dtype=np.int64)]
        ),
        generation=generation,
    )
    logger.debug(
        f"refine: marked={marked.size} bisected_edges={len(split_edges)} "
        f"triangles {mesh.n_triangles} -> {refined.n_triangles}"
    )
    return refined


def uniform_refine(mesh: Mesh) -> Mesh:
    """refine() with every triangle marked"""
    return refine(mesh, np.arange(mesh.n_triangles))
