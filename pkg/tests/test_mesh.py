import numpy as np
import pytest

from hybrid_afem.mesh import (DIRICHLET, INTERIOR, Mesh, MeshError, bisect, build_initial_mesh,
                              is_conforming, patches, read_mesh, similarity_classes,
                              triangle_geometry, uniform_refine, write_mesh)


def hanging_vertices(mesh):
    """Vertices lying in the interior of some edge (exhaustive scan)."""
    bad = []
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    for v, p in enumerate(mesh.vertices):
        ab = b - a
        t = np.einsum("ed,ed->e", p - a, ab) / np.einsum("ed,ed->e", ab, ab)
        dist = np.abs(ab[:, 0] * (p - a)[:, 1] - ab[:, 1] * (p - a)[:, 0])
        hit = (t > 1e-12) & (t < 1 - 1e-12) & (dist < 1e-12)
        if hit.any():
            bad.append(v)
    return bad


@pytest.mark.parametrize("n,nt,nv", [(4, 32, 25), (10, 200, 121), (1, 2, 4)])
def test_initial_mesh_counts(n, nt, nv):
    m = build_initial_mesh(n, n)
    assert (m.n_triangles, m.n_vertices) == (nt, nv)
    assert np.all(m.signed_areas > 0)
    assert m.areas.sum() == pytest.approx(4.0)


def test_single_square_has_five_edges():
    assert build_initial_mesh(1, 1).n_edges == 5


def test_initial_mesh_is_congruent(mesh10):
    assert similarity_classes(mesh10) == 1
    assert np.allclose(mesh10.areas, 0.02)


def test_geometry_unit_right_triangle():
    g = triangle_geometry([[0, 0], [1, 0], [0, 1]])
    assert g.area == pytest.approx(0.5)
    assert g.diameter == pytest.approx(np.sqrt(2))
    assert g.inradius == pytest.approx((2 - np.sqrt(2)) / 2)
    assert g.perimeter == pytest.approx(2 + np.sqrt(2))


def test_geometry_equilateral_inradius():
    g = triangle_geometry([[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]])
    assert g.inradius == pytest.approx(1 / (2 * np.sqrt(3)))


def test_geometry_normals_outward_even_for_clockwise_input():
    p = np.array([[0, 0], [0, 1], [1, 0]], dtype=float)
    g = triangle_geometry(p)
    c = p.mean(axis=0)
    for i, (a, b) in enumerate([(1, 2), (2, 0), (0, 1)]):
        mid = 0.5 * (p[a] + p[b])
        assert np.dot(g.normals[i], mid - c) > 0


def test_degenerate_triangle_rejected():
    with pytest.raises(MeshError):
        triangle_geometry([[0, 0], [1, 1], [2, 2]])


def test_patch_sizes(mesh4):
    omega_e, omega_k = patches(mesh4)
    inner = mesh4.edge_tags == INTERIOR
    assert np.all(omega_e[inner, 1] >= 0)
    assert np.all(omega_e[~inner, 1] == -1)
    sizes = (omega_k >= 0).sum(axis=1)
    interior_elem = ~np.isin(np.arange(mesh4.n_triangles),
                             mesh4.edge_elems[mesh4.edge_tags != INTERIOR, 0])
    assert np.all(sizes[interior_elem] == 4)


def test_boundary_tags_default_dirichlet(mesh4):
    assert set(mesh4.edge_tags[mesh4.edge_elems[:, 1] < 0]) == {DIRICHLET}
    assert len(mesh4.dirichlet_vertices) == 16


def test_uniform_bisection_doubles(mesh4):
    m = bisect(mesh4, np.arange(32))
    assert m.n_triangles == 64
    assert is_conforming(m) and not hanging_vertices(m)
    assert m.areas.sum() == pytest.approx(4.0)


def test_single_mark_gives_conforming_closure(mesh4):
    m = mesh4
    for k in (5, 0, 17):
        m = bisect(m, [k])
        assert is_conforming(m)
        assert hanging_vertices(m) == []
    assert m.n_triangles > 32


def test_empty_mark_is_identity(mesh4):
    m = bisect(mesh4, [])
    assert m is mesh4


def test_bisection_keeps_shape_classes(mesh4):
    m = mesh4
    rng = np.random.default_rng(3)
    for _ in range(6):
        m = bisect(m, rng.choice(m.n_triangles, size=max(1, m.n_triangles // 5), replace=False))
    assert similarity_classes(m) <= 2
    assert m.shape_constant == pytest.approx(mesh4.shape_constant)


def test_mark_out_of_range(mesh4):
    with pytest.raises(IndexError):
        bisect(mesh4, [32])


def test_invalid_input_rejected():
    with pytest.raises(MeshError):
        Mesh([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])     # clockwise
    with pytest.raises(MeshError):
        Mesh([[0, 0], [1, 0]], [[0, 1, 2]])
    with pytest.raises(ValueError):
        build_initial_mesh(0, 3)


def test_from_arrays_reorients():
    m = Mesh.from_arrays([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])
    assert m.signed_areas[0] > 0
    # longest edge first
    assert m.local_edge_lengths[0, 0] == pytest.approx(np.sqrt(2))


def test_mesh_roundtrip(tmp_path, mesh4):
    m = uniform_refine(mesh4, 3)
    path = tmp_path / "m.txt"
    write_mesh(m, path)
    r = read_mesh(path)
    assert np.array_equal(r.vertices, m.vertices)
    assert np.array_equal(r.triangles, m.triangles)
    assert np.array_equal(r.edge_tags, m.edge_tags)


def test_similarity_classes_bounded_over_refinements(mesh4):
    m = mesh4
    for _ in range(12):
        m = uniform_refine(m, 1)
        assert similarity_classes(m) <= 8


def test_edge_normals_consistent():
    m = bisect(build_initial_mesh(4, 4), [3, 9, 20])
    for e in np.flatnonzero(m.edge_elems[:, 1] >= 0):
        for k, sign in zip(m.edge_elems[e], (1.0, -1.0)):
            i = int(np.flatnonzero(m.elem_edges[k] == e)[0])
            assert np.allclose(m.local_normals[k, i], sign * m.edge_normals[e], atol=1e-14)
