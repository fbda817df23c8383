"""
Benchmark Domains - Initial Meshes
Coarse triangulations made of axis-aligned right isosceles triangles. Where a square
is split, its diagonal runs through the origin so the re-entrant corner is a vertex
of as many triangles as possible. Golden dumps live in data/meshes/.
"""
from typing import Callable, Dict

from exceptions import UnknownNameError
from meshing.mesh import Mesh


def unit_square() -> Mesh:
    """(0,1)^2 as two triangles sharing the diagonal (0,0)-(1,1)"""
    vertices = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    triangles = [(0, 1, 2), (0, 2, 3)]
    return Mesh.from_arrays(vertices, triangles)


def lshape() -> Mesh:
    """(-1,1)^2 minus [0,1]x[-1,0]: three unit squares, six triangles"""
    vertices = [
        (-1.0, -1.0),  # 0
        (0.0, -1.0),   # 1
        (-1.0, 0.0),   # 2
        (0.0, 0.0),    # 3 re-entrant corner
        (1.0, 0.0),    # 4
        (-1.0, 1.0),   # 5
        (0.0, 1.0),    # 6
        (1.0, 1.0),    # 7
    ]
    triangles = [
        (0, 1, 3), (0, 3, 2),  # south-west, diagonal (-1,-1)-(0,0)
        (2, 3, 5), (3, 6, 5),  # north-west, diagonal (-1,1)-(0,0)
        (3, 4, 7), (3, 7, 6),  # north-east, diagonal (0,0)-(1,1)
    ]
    return Mesh.from_arrays(vertices, triangles)


def zshape() -> Mesh:
    """(-1,1)^2 minus conv{(-1,0), (0,0), (-1,-1)}: seven triangles"""
    vertices = [
        (-1.0, -1.0),  # 0
        (0.0, -1.0),   # 1
        (1.0, -1.0),   # 2
        (-1.0, 0.0),   # 3
        (0.0, 0.0),    # 4 re-entrant corner
        (1.0, 0.0),    # 5
        (-1.0, 1.0),   # 6
        (0.0, 1.0),    # 7
        (1.0, 1.0),    # 8
    ]
    triangles = [
        (0, 1, 4),             # remaining half of the south-west square
        (1, 2, 4), (2, 5, 4),  # south-east, diagonal (0,0)-(1,-1)
        (4, 5, 8), (4, 8, 7),  # north-east, diagonal (0,0)-(1,1)
        (3, 4, 6), (4, 7, 6),  # north-west, diagonal (-1,1)-(0,0)
    ]
    return Mesh.from_arrays(vertices, triangles)


DOMAINS: Dict[str, Callable[[], Mesh]] = {
    "square": unit_square,
    "lshape": lshape,
    "zshape": zshape,
}


def make_domain(name: str) -> Mesh:
    """Initial mesh of a named benchmark domain"""
    try:
        factory = DOMAINS[name]
    except KeyError:
        raise UnknownNameError(f"Unknown domain '{name}'. Choose from {sorted(DOMAINS)}") from None
    return factory()
