import numpy as np
import pytest

from hdgmhd.mesh import (MeshError, build_hartmann_mesh, build_lshaped_mesh, extract_skeleton,
                         single_triangle)


@pytest.mark.parametrize("level", [1, 2, 3])
def test_hartmann_counts_and_area(level):
    m = build_hartmann_mesh(level)
    assert m.n_elements == 2 * level * 80 * level
    assert np.isclose(m.geometry().areas.sum(), 0.05)
    assert np.isclose(m.h, np.hypot(0.025 / level, 0.025 / level))


@pytest.mark.parametrize("level", [1, 2, 4])
def test_lshaped_counts_and_area(level):
    m = build_lshaped_mesh(level)
    assert m.n_elements == 6 * level * level
    assert np.isclose(m.geometry().areas.sum(), 3.0)
    # Euler characteristic of a simply connected polygon: V - E + F = 1
    assert m.n_vertices - m.n_edges + m.n_elements == 1


def test_skeleton_consistency():
    m = build_lshaped_mesh(3)
    # every interior edge has two elements, boundary edges one
    assert np.all((m.edge_elements[:, 1] >= 0) == m.interior)
    for f in range(m.n_edges):
        for side in (0, 1):
            e = m.edge_elements[f, side]
            if e < 0:
                continue
            loc = m.edge_local[f, side]
            assert m.element_edges[e, loc] == f
            pair = sorted((m.elements[e, loc], m.elements[e, (loc + 1) % 3]))
            assert pair == m.edges[f].tolist()
    assert np.all(m.edges[:, 0] < m.edges[:, 1])


def test_owner_normals_point_outward():
    m = build_lshaped_mesh(2)
    xy = m.vertices[m.elements]
    centroid = xy.mean(axis=1)
    mid = m.vertices[m.edges].mean(axis=1)
    own = m.edge_elements[:, 0]
    assert np.all(np.einsum("fc,fc->f", mid - centroid[own], m.edge_normals) > 0)


def test_boundary_edges_lie_on_domain_boundary():
    m = build_lshaped_mesh(4)
    mid = m.vertices[m.edges[m.boundary]].mean(axis=1)
    x, y = mid[:, 0], mid[:, 1]
    on = (np.isclose(np.abs(x), 1) | np.isclose(np.abs(y), 1)
          | (np.isclose(x, 0) & (y < 0)) | (np.isclose(y, 0) & (x > 0)))
    assert np.all(on)


def test_geometry_round_trip():
    m = build_hartmann_mesh(1)
    g = m.geometry()
    xi = np.array([[0.2, 0.3], [0.0, 0.0], [1.0, 0.0]])
    x = g.to_physical(xi)
    assert np.allclose(g.to_reference(x), xi[None])


def test_rejects_clockwise_triangles():
    with pytest.raises(MeshError):
        extract_skeleton([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])


def test_rejects_overshared_edges():
    v = [[0, 0], [1, 0], [0, 1], [0, -1], [2, 1]]
    with pytest.raises(MeshError):
        extract_skeleton(v, [[0, 1, 2], [0, 3, 1], [1, 4, 0]])


def test_single_triangle():
    m = single_triangle()
    assert m.n_elements == 1 and m.n_edges == 3 and m.boundary.all()


@pytest.mark.parametrize("builder", [build_hartmann_mesh, build_lshaped_mesh])
def test_level_must_be_positive(builder):
    with pytest.raises(ValueError):
        builder(0)
