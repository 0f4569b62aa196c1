import math

import numpy as np
import pytest

from hdm.mesh import (Mesh, build_initial_mesh, build_mesh, dump_mesh, load_mesh, on_boundary,
                      refine_red)


@pytest.mark.parametrize("domain,kind,nv,ne,nc,h", [
    ("square", "triangle", 4, 5, 2, math.sqrt(2)),
    ("square", "rectangle", 4, 4, 1, math.sqrt(2)),
    ("lshape", "rectangle", 8, 10, 3, math.sqrt(2)),
    ("lshape", "triangle", 8, 13, 6, math.sqrt(2)),
])
def test_initial_counts(domain, kind, nv, ne, nc, h):
    m = build_initial_mesh(domain, kind)
    assert (m.n_vertices, m.n_edges, m.n_cells) == (nv, ne, nc)
    assert m.h == pytest.approx(h, rel=1e-14)
    assert nv - ne + nc == 1


def test_square_triangles_split_along_main_diagonal():
    m = build_initial_mesh("square", "triangle")
    diag = {tuple(sorted(e)) for e in m.edges.tolist()}
    assert (0, 2) in diag


def test_crisscross_pattern():
    m = build_initial_mesh("square", "triangle", "crisscross")
    assert m.n_cells == 4 and m.h == pytest.approx(1.0)
    assert np.count_nonzero(~m.boundary_vertices) == 1
    with pytest.raises(ValueError):
        build_initial_mesh("lshape", "triangle", "crisscross")


@pytest.mark.parametrize("domain,kind,level,cells", [
    ("square", "triangle", 1, 8),
    ("square", "rectangle", 1, 4),
    ("lshape", "rectangle", 2, 48),
])
def test_refinement_counts(domain, kind, level, cells):
    m = build_mesh(domain, kind, level)
    assert m.n_cells == cells
    assert m.level == level


@pytest.mark.parametrize("domain,kind", [("square", "triangle"), ("square", "rectangle"),
                                         ("lshape", "triangle"), ("lshape", "rectangle")])
def test_invariants_under_refinement(domain, kind):
    area = 1.0 if domain == "square" else 3.0
    m = build_initial_mesh(domain, kind)
    for level in range(4):
        assert m.n_vertices - m.n_edges + m.n_cells == 1
        assert m.areas.sum() == pytest.approx(area, rel=1e-12)
        assert np.all(m.areas > 0)
        # every cell edge appears once in the edge list
        assert np.unique(m.cell_edges).size == m.n_edges
        n = np.linalg.norm(m.edge_normals, axis=1)
        assert np.allclose(n, 1.0, atol=1e-14)
        # boundary edges have exactly one cell
        assert np.all(m.edge_cells[m.boundary_edges, 1] == -1)
        assert np.all(m.edge_cells[~m.boundary_edges, 1] >= 0)
        child = refine_red(m)
        assert child.h == pytest.approx(m.h / 2, rel=1e-12)
        m = child


def test_square_closed_form_counts():
    for L in range(5):
        assert build_mesh("square", "triangle", L).n_cells == 2 * 4 ** L


def test_interior_normals_point_from_lower_to_higher_cell():
    m = build_mesh("lshape", "triangle", 2)
    inner = np.flatnonzero(m.edge_cells[:, 1] >= 0)
    c0, c1 = m.edge_cells[inner, 0], m.edge_cells[inner, 1]
    assert np.all(c0 < c1)
    d = m.centroids[c1] - m.centroids[c0]
    assert np.all(np.sum(d * m.edge_normals[inner], axis=1) > 0)


def test_boundary_normals_point_outward():
    m = build_mesh("square", "triangle", 2)
    b = np.flatnonzero(m.boundary_edges)
    d = m.edge_midpoints[b] - m.centroids[m.edge_cells[b, 0]]
    assert np.all(np.sum(d * m.edge_normals[b], axis=1) > 0)


def test_ccw_and_diameters():
    m = build_mesh("lshape", "rectangle", 1)
    p = m.points[m.cells]
    for c in range(m.n_cells):
        d = max(np.linalg.norm(a - b) for a in p[c] for b in p[c])
        assert m.diameters[c] == pytest.approx(d)


@pytest.mark.parametrize("domain,kind,level,n_boundary,n_interior", [
    ("square", "triangle", 1, 8, 1),
    ("square", "triangle", 2, 16, 9),
    ("lshape", "rectangle", 0, 8, 0),
])
def test_boundary_classification(domain, kind, level, n_boundary, n_interior):
    m = build_mesh(domain, kind, level)
    assert np.count_nonzero(m.boundary_vertices) == n_boundary
    assert m.interior_vertices.size == n_interior


def test_reentrant_corner_is_boundary_vertex_at_every_level():
    for L in range(3):
        m = build_mesh("lshape", "triangle", L)
        i = np.flatnonzero(np.all(np.abs(m.points) < 1e-14, axis=1))
        assert i.size == 1 and m.boundary_vertices[i[0]]


def test_on_boundary_tolerance():
    xy = np.array([[0.5, 0.0], [0.5, 1e-13], [0.5, 1e-9], [0.5, -0.5], [0.0, -0.5]])
    assert on_boundary("square", xy[:3]).tolist() == [True, True, False]
    assert on_boundary("lshape", xy[3:]).tolist() == [False, True]


def test_entities_and_immutability():
    m = build_mesh("square", "triangle", 1)
    v = m.vertex(0)
    assert (v.x, v.y) == (0.0, 0.0)
    e = m.edge(0)
    assert len(e.vertex_ids) == 2 and e.vertex_ids[0] < e.vertex_ids[1]
    assert m.cell(0).kind == "triangle"
    with pytest.raises(ValueError):
        m.points[0, 0] = 3.0


def test_dump_roundtrip():
    m = build_mesh("lshape", "triangle", 1)
    text = dump_mesh(m)
    assert text.splitlines()[0] == f"{m.n_vertices} {m.n_edges} {m.n_cells}"
    m2 = load_mesh(text, "lshape", 1)
    assert np.array_equal(m2.points, m.points) and np.array_equal(m2.cells, m.cells)
    assert dump_mesh(m2) == text


def test_negative_level_rejected():
    with pytest.raises(ValueError):
        build_mesh("square", "triangle", -1)


def test_mesh_rejects_clockwise_cells():
    with pytest.raises(ValueError):
        Mesh(np.array([[0.0, 0], [1, 0], [0, 1]]), np.array([[0, 2, 1]]), "triangle", "square", 0)
