"""Shared fixtures: meshes, problem data and small refinement pyramids"""
import numpy as np
import pytest

from meshing import make_domain, refine, uniform_refine
from nonlinearity import builtin
from problems import ProblemData, one_scalar, zero_vector


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def lshape_law():
    return builtin("lshape")


@pytest.fixture
def flat_data():
    """f = 1, f_vec = 0: elementwise-constant data"""
    return ProblemData(f=one_scalar, f_vec=zero_vector, name="flat")


@pytest.fixture
def fine_lshape():
    mesh = make_domain("lshape")
    for _ in range(3):
        mesh = uniform_refine(mesh)
    return mesh


@pytest.fixture
def corner_pyramid():
    """L-shape meshes T_0, ..., T_8, each one refine() of the previous, graded towards the origin"""
    meshes = [make_domain("lshape")]
    for _ in range(8):
        mesh = meshes[-1]
        centers = mesh.vertices[mesh.triangles].mean(axis=1)
        near = np.flatnonzero(np.linalg.norm(centers, axis=1) < 0.5)
        marked = np.union1d(near, np.arange(0, mesh.n_triangles, 3))
        meshes.append(refine(mesh, marked))
    return meshes
