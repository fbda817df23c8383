import numpy as np
import pytest

from exceptions import InvalidParameterError, UnknownNameError
from meshing import (
    DOMAINS,
    Mesh,
    check_conformity,
    make_domain,
    refine,
    shape_regularity,
    uniform_refine,
    validate_marked,
)


@pytest.mark.parametrize("name,area,n_triangles", [("square", 1.0, 2), ("lshape", 3.0, 6), ("zshape", 3.5, 7)])
def test_initial_domains(name, area, n_triangles):
    mesh = make_domain(name)
    assert mesh.n_triangles == n_triangles
    assert mesh.total_area == pytest.approx(area, abs=1e-14)
    assert np.all(mesh.areas > 0)
    ok, reason = check_conformity(mesh)
    assert ok, reason


@pytest.mark.parametrize("name", sorted(DOMAINS))
def test_initial_refinement_edge_is_longest(name):
    mesh = make_domain(name)
    p = mesh.vertices[mesh.triangles]
    refinement = np.linalg.norm(p[:, 2] - p[:, 1], axis=1)
    others = np.maximum(np.linalg.norm(p[:, 0] - p[:, 2], axis=1), np.linalg.norm(p[:, 1] - p[:, 0], axis=1))
    assert np.all(refinement >= others)


def test_unknown_domain():
    with pytest.raises(UnknownNameError):
        make_domain("annulus")


def test_degenerate_triangle_rejected():
    with pytest.raises(InvalidParameterError):
        Mesh.from_arrays([(0, 0), (1, 0), (2, 0)], [(0, 1, 2)])


def test_mesh_arrays_are_read_only():
    mesh = make_domain("square")
    with pytest.raises(ValueError):
        mesh.vertices[0, 0] = 5.0


def test_uniform_refine_square():
    fine = uniform_refine(make_domain("square"))
    assert fine.n_triangles == 4
    assert fine.n_vertices == 5
    assert np.allclose(fine.vertices[4], [0.5, 0.5])
    assert fine.generation == 1


def test_refine_empty_marking_returns_same_mesh():
    mesh = make_domain("lshape")
    assert refine(mesh, []) is mesh


def test_refine_bookkeeping(rng):
    mesh = make_domain("zshape")
    for _ in range(5):
        marked = rng.choice(mesh.n_triangles, size=max(1, mesh.n_triangles // 3), replace=False)
        fine = refine(mesh, marked)

        # old vertices keep their indices, new ones sit at the midpoint of their parent edge
        assert np.array_equal(fine.vertices[: mesh.n_vertices], mesh.vertices)
        new = fine.new_vertices
        assert np.array_equal(new, np.arange(mesh.n_vertices, fine.n_vertices))
        parents = fine.vertex_parents[new]
        assert np.allclose(fine.vertices[new], fine.vertices[parents].mean(axis=1))

        # every marked triangle was bisected, areas are preserved per parent
        refined = fine.refined_mask(mesh)
        assert set(marked.tolist()) <= set(fine.parent[refined].tolist())
        child_area = np.bincount(fine.parent, weights=fine.areas, minlength=mesh.n_triangles)
        assert np.allclose(child_area, mesh.areas)
        children = np.bincount(fine.parent, minlength=mesh.n_triangles)
        assert np.array_equal(fine.coarse_refined_mask(mesh), children > 1)

        ok, reason = check_conformity(fine)
        assert ok, reason
        mesh = fine


def test_coarse_refined_mask_matches_children():
    mesh = make_domain("lshape")
    fine = refine(mesh, [0])
    mask = fine.coarse_refined_mask(mesh)
    assert mask[0]
    counts = np.bincount(fine.parent, minlength=mesh.n_triangles)
    assert np.array_equal(mask, counts > 1)


def test_refined_mask_needs_one_step_refinement():
    mesh = make_domain("square")
    twice = uniform_refine(uniform_refine(mesh))
    with pytest.raises(InvalidParameterError):
        twice.refined_mask(mesh)


def test_shape_regularity_bounded(corner_pyramid):
    # bisection of right isosceles triangles only produces similar triangles
    initial = shape_regularity(corner_pyramid[0])
    for mesh in corner_pyramid:
        assert shape_regularity(mesh) <= initial * (1 + 1e-9)


def test_closure_keeps_pyramid_conforming(corner_pyramid):
    for coarse, fine in zip(corner_pyramid, corner_pyramid[1:]):
        ok, reason = check_conformity(fine)
        assert ok, reason
        assert fine.generation == coarse.generation + 1
        assert fine.total_area == pytest.approx(3.0, abs=1e-12)


def test_edge_adjacency():
    mesh = make_domain("lshape")
    assert len(mesh.boundary_edges) == 8
    e2t = mesh.edge_triangles
    interior = e2t[:, 1] >= 0
    assert np.array_equal(interior, mesh.edge_incidence == 2)
    for e in np.flatnonzero(interior):
        for t in e2t[e]:
            assert e in mesh.triangle_edges[t]


def test_hanging_node_detected():
    vertices = [(0, 0), (2, 0), (0, 2), (2, 2), (1, 1)]
    triangles = [(0, 1, 2), (1, 3, 4), (3, 2, 4)]
    ok, reason = check_conformity(Mesh.from_arrays(vertices, triangles))
    assert not ok
    assert "Hanging node" in reason


def test_validate_marked():
    assert np.array_equal(validate_marked([3, 1], 5), [1, 3])
    with pytest.raises(InvalidParameterError):
        validate_marked([5], 5)
    with pytest.raises(InvalidParameterError):
        validate_marked([-1], 5)
    with pytest.raises(InvalidParameterError):
        validate_marked([1, 1], 5)
