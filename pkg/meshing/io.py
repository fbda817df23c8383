"""
Mesh Text Format - Dumps and Golden Files

    vertices N
    x y            (N lines, full precision)
    triangles M
    i j k r        (M lines, r = local index of the refinement edge, edge i is opposite vertex i)
    boundary B
    i j            (B lines)

All indices are 0-based. Provenance (levels, parents) is not part of the format.
"""
from pathlib import Path
from typing import List, Union

import numpy as np

from exceptions import InvalidParameterError
from meshing.mesh import Mesh, orient_counter_clockwise


def format_mesh(mesh: Mesh) -> str:
    lines: List[str] = [f"vertices {mesh.n_vertices}"]
    lines += [f"{float(x)!r} {float(y)!r}" for x, y in mesh.vertices]
    lines.append(f"triangles {mesh.n_triangles}")
    lines += [f"{i} {j} {k} 0" for i, j, k in mesh.triangles]
    boundary = mesh.boundary_edges
    lines.append(f"boundary {len(boundary)}")
    lines += [f"{i} {j}" for i, j in boundary]
    return "\n".join(lines) + "\n"


def _read_section(lines: List[str], pos: int, header: str):
    parts = lines[pos].split()
    if len(parts) != 2 or parts[0] != header:
        raise InvalidParameterError(f"Expected '{header} <count>' at line {pos + 1}, got '{lines[pos]}'")
    count = int(parts[1])
    body = lines[pos + 1: pos + 1 + count]
    if len(body) != count:
        raise InvalidParameterError(f"Section '{header}' is truncated")
    return body, pos + 1 + count


def parse_mesh(text: str) -> Mesh:
    """Parse the text format; each triangle is rotated so its refinement edge sits opposite local vertex 0"""
    lines = [line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")]
    body, pos = _read_section(lines, 0, "vertices")
    vertices = np.array([[float(v) for v in line.split()] for line in body], dtype=float).reshape(-1, 2)

    body, pos = _read_section(lines, pos, "triangles")
    raw = np.array([[int(v) for v in line.split()] for line in body], dtype=np.int64).reshape(-1, 4)
    if np.any((raw[:, 3] < 0) | (raw[:, 3] > 2)):
        raise InvalidParameterError("Refinement-edge index must be 0, 1 or 2")
    out_of_range = np.flatnonzero(np.any((raw[:, :3] < 0) | (raw[:, :3] >= len(vertices)), axis=1))
    if out_of_range.size:
        raise InvalidParameterError(
            f"Triangle {int(out_of_range[0])} references a vertex outside 0..{len(vertices) - 1}"
        )
    triangles = np.array([np.roll(row[:3], -row[3]) for row in raw], dtype=np.int64).reshape(-1, 3)
    triangles = orient_counter_clockwise(vertices, triangles)
    p0, p1, p2 = (vertices[triangles[:, i]] for i in range(3))
    d1, d2 = p1 - p0, p2 - p0
    degenerate = np.flatnonzero(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] <= 0)
    if degenerate.size:
        raise InvalidParameterError(f"Triangle {int(degenerate[0])} has zero area")

    body, pos = _read_section(lines, pos, "boundary")
    boundary = np.array([[int(v) for v in line.split()] for line in body], dtype=np.int64).reshape(-1, 2)

    n_vertices, n_triangles = len(vertices), len(triangles)
    mesh = Mesh(
        vertices=vertices,
        triangles=triangles,
        level=np.zeros(n_triangles, dtype=np.int64),
        parent=np.full(n_triangles, -1, dtype=np.int64),
        vertex_parents=np.full((n_vertices, 2), -1, dtype=np.int64),
        vertex_generation=np.zeros(n_vertices, dtype=np.int64),
    )

    declared = {tuple(sorted(edge)) for edge in boundary.tolist()}
    actual = {tuple(edge) for edge in mesh.boundary_edges.tolist()}
    if declared != actual:
        raise InvalidParameterError(
            f"Boundary section does not match the single-neighbor edges "
            f"({len(declared ^ actual)} edges differ)"
        )
    return mesh


def dump_mesh(mesh: Mesh, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_mesh(mesh))


def load_mesh(path: Union[str, Path]) -> Mesh:
    return parse_mesh(Path(path).read_text())
