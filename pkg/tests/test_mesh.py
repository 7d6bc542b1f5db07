import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mhdeq.errors import InvalidArgument, OutOfDomain
from mhdeq.mesh import LOCAL_EDGES, build_box_mesh, classify_inflow, mesh_size
from mhdeq.quadrature import tri_rule


def test_single_cube_counts():
    m = build_box_mesh((0, 0, 0), (1, 1, 1), 1)
    assert (m.n_vertices, m.n_tets, m.n_edges) == (8, 6, 19)
    assert np.isclose(mesh_size(m), np.sqrt(3.0))


def test_two_cube_counts():
    m = build_box_mesh((0, 0, 0), (1, 1, 1), 2)
    assert (m.n_vertices, m.n_tets) == (27, 48)


def test_table_mesh_size():
    m = build_box_mesh((-1, -1, -1), (1, 1, 1), 5)
    assert round(mesh_size(m), 5) == 0.69282


def test_doubling_halves_h():
    a = mesh_size(build_box_mesh((0, 0, 0), (2, 1, 3), 3))
    b = mesh_size(build_box_mesh((0, 0, 0), (2, 1, 3), 6))
    assert np.isclose(a, 2 * b, rtol=1e-14)


@pytest.mark.parametrize("lo,hi,n", [((0, 0, 0), (1, 1, 0), 2), ((0, 0, 0), (1, 1, 1), 0),
                                     ((1, 0, 0), (0, 1, 1), 2), ((0, 0, 0), (1, 1, 1), 1.5)])
def test_invalid_boxes(lo, hi, n):
    with pytest.raises(InvalidArgument):
        build_box_mesh(lo, hi, n)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3),
       st.lists(st.floats(0.1, 4), min_size=3, max_size=3),
       st.integers(1, 4))
def test_mesh_invariants(lo, size, n):
    hi = np.array(lo) + np.array(size)
    m = build_box_mesh(lo, hi, n)
    assert m.n_tets == 6 * n ** 3 and m.n_vertices == (n + 1) ** 3
    assert np.all(m.volumes > 0)
    assert np.isclose(m.volumes.sum(), np.prod(size), rtol=1e-12)
    closure = (m.bface_areas[:, None] * m.bface_normals).sum(axis=0)
    assert np.abs(closure).max() <= 1e-12 * m.bface_areas.sum()
    # outward normals
    fc = m.vertices[m.bface_vertices].mean(axis=1)
    assert np.all(np.einsum("fi,fi->f", m.bface_normals, fc - m.centroids[m.bface_tets]) > 0)
    # faces: interior shared twice, boundary once
    nb = (m.neighbors >= 0).sum()
    assert nb % 2 == 0
    assert nb + m.n_bfaces == 4 * m.n_tets
    # edge orientation agrees with the local signs
    ends = m.tets[:, LOCAL_EDGES]
    glob = m.edges[m.tet_edges]
    same = np.all(ends == glob, axis=2)
    flipped = np.all(ends[:, :, ::-1] == glob, axis=2)
    assert np.all(np.where(m.tet_edge_signs > 0, same, flipped))
    assert np.all(m.edges[:, 0] < m.edges[:, 1])


def _faces_on(m, axis, value):
    fc = m.vertices[m.bface_vertices].mean(axis=1)
    return set(np.flatnonzero(np.isclose(fc[:, axis], value)))


def test_classify_vertical_field():
    m = build_box_mesh((0, 0, 0), (1, 2, 3), 2)
    part = classify_inflow(m, lambda x: np.broadcast_to([0.0, 0.0, 1.0], x.shape))
    assert set(part.inflow_faces) == _faces_on(m, 2, 0.0)
    assert set(part.outflow_faces) == _faces_on(m, 2, 3.0)
    assert len(part.tangential_faces) == m.n_bfaces - len(part.inflow_faces) - len(part.outflow_faces)


def test_classify_diagonal_field():
    m = build_box_mesh((0, 0, 0), (1, 1, 1), 3)
    part = classify_inflow(m, lambda x: np.ones(x.shape))
    expect = _faces_on(m, 0, 0.0) | _faces_on(m, 1, 0.0) | _faces_on(m, 2, 0.0)
    assert set(part.inflow_faces) == expect
    assert len(part.tangential_faces) == 0


def test_classify_against_bruteforce_oracle():
    from mhdeq.cases import make_fff_case
    case = make_fff_case()
    m = build_box_mesh((-1, -1, -1), (1, 1, 1), 4)
    part = classify_inflow(m, case.B)
    # independent oracle: high-order face average of B.n, face by face
    bary, w = tri_rule(9)
    expect = []
    for f in range(m.n_bfaces):
        pts = bary @ m.vertices[m.bface_vertices[f]]
        if (w * (case.B(pts) @ m.bface_normals[f])).sum() < 0:
            expect.append(f)
    assert list(part.inflow_faces) == expect
    parts = [part.inflow_faces, part.outflow_faces, part.tangential_faces]
    assert sorted(np.concatenate(parts)) == list(range(m.n_bfaces))


@given(st.floats(1e-3, 1e3))
@settings(max_examples=20, deadline=None)
def test_classification_scale_invariant(s):
    m = build_box_mesh((0, 0, 0), (1, 1, 1), 2)

    def f(x):
        return np.stack([np.sin(3 * x[..., 1]), x[..., 0] - 0.4, np.cos(x[..., 2])], axis=-1)

    a = classify_inflow(m, f)
    b = classify_inflow(m, lambda x: s * f(x))
    for u, v in zip((a.inflow_faces, a.outflow_faces, a.tangential_faces),
                    (b.inflow_faces, b.outflow_faces, b.tangential_faces)):
        assert np.array_equal(u, v)


def test_locate(rng):
    m = build_box_mesh((0, 0, 0), (1, 2, 1), 3)
    pts = rng.uniform([0, 0, 0], [1, 2, 1], size=(50, 3))
    cells, bary = m.locate(pts)
    assert np.all(bary >= -1e-12)
    assert np.allclose(np.einsum("pa,pai->pi", bary, m.vertices[m.tets[cells]]), pts)
    with pytest.raises(OutOfDomain):
        m.locate([[1.5, 0.5, 0.5]])
