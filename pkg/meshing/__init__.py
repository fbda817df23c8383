from meshing.mesh import Mesh, check_conformity, shape_regularity, validate_marked
from meshing.bisection import refine, uniform_refine
from meshing.domains import DOMAINS, make_domain
from meshing.io import dump_mesh, format_mesh, load_mesh, parse_mesh

__all__ = [
    "Mesh", "check_conformity", "shape_regularity", "validate_marked",
    "refine", "uniform_refine",
    "DOMAINS", "make_domain",
    "dump_mesh", "format_mesh", "load_mesh", "parse_mesh",
]
