import numpy as np
import pytest
import scipy.sparse.linalg as spla

from mhdeq.errors import OutOfDomain
from mhdeq.lagrange import LagrangeSpace, ScalarField
from mhdeq.mesh import build_box_mesh
from mhdeq.nedelec import (EdgeField, assemble_curl_div, assemble_edge_mass,
                           assemble_gradient_map, basis_values, curl_of_edge_field, curl_rhs,
                           divergence_residual, evaluate_edge_field, gradient_edge_field,
                           hcurl_error, interpolate_edge, l2_norm, p1_recovery,
                           solve_vector_potential)
from mhdeq.quadrature import tet_rule

from conftest import fitted_slope
from manufactured import b_exact, j_exact

UNIT = ((0, 0, 0), (1, 1, 1))


@pytest.fixture(scope="module")
def mesh3():
    return build_box_mesh((0, -1, 0), (2, 1, 1), 3)


def test_gradient_map_definition(mesh3):
    G = assemble_gradient_map(mesh3)
    assert np.abs(G @ np.ones(mesh3.n_vertices)).max() == 0.0
    x = mesh3.vertices[:, 0]
    assert np.array_equal(G @ x, x[mesh3.edges[:, 1]] - x[mesh3.edges[:, 0]])


def test_curl_of_gradients_vanishes(mesh3, rng):
    sysm = assemble_curl_div(mesh3)
    scale = abs(sysm.A_curl).max()
    for _ in range(10):
        phi = rng.standard_normal(mesh3.n_vertices)
        g = EdgeField(mesh3, sysm.G @ phi)
        assert np.abs(curl_of_edge_field(g)).max() <= 1e-12 * np.abs(phi).max() / mesh3.cell_sizes.min()
        assert np.abs(sysm.A_curl @ g.values).max() <= 1e-12 * scale * np.abs(phi).max()


def test_remark_identities(mesh3, rng):
    sysm = assemble_curl_div(mesh3)
    GtA = sysm.G.T @ sysm.A_curl
    assert abs(GtA).max() <= 1e-12 * abs(sysm.A_curl).max()
    C = curl_rhs(mesh3, rng.standard_normal((mesh3.n_tets, 3)))
    assert np.abs(sysm.G.T @ C).max() <= 1e-12 * np.abs(C).max()
    C2 = curl_rhs(mesh3, lambda x: np.stack([x[..., 1] ** 2, np.exp(x[..., 0]), x[..., 2]], -1))
    assert np.abs(sysm.G.T @ C2).max() <= 1e-12 * np.abs(C2).max()


def test_matrix_properties(mesh3, rng):
    sysm = assemble_curl_div(mesh3)
    A, Me = sysm.A_curl, sysm.Me
    assert abs(A - A.T).max() <= 1e-14 * abs(A).max()
    assert abs(Me - Me.T).max() <= 1e-14 * abs(Me).max()
    assert spla.eigsh(Me, k=1, which="SA", return_eigenvectors=False)[0] > 0
    x = rng.standard_normal(A.shape[0])
    assert x @ (A @ x) >= 0


def test_edge_mass_against_quadrature(mesh3, rng):
    bary, w = tet_rule(2)
    W = basis_values(mesh3, bary)
    loc = np.einsum("q,tqai,tqbi->tab", w, W, W) * mesh3.volumes[:, None, None]
    x = rng.standard_normal(mesh3.n_edges)
    direct = np.einsum("tab,ta,tb->", loc, x[mesh3.tet_edges], x[mesh3.tet_edges])
    Me = assemble_edge_mass(mesh3)
    assert np.isclose(x @ (Me @ x), direct, rtol=1e-12)


def test_zero_current(mesh3):
    b = solve_vector_potential(mesh3, np.zeros((mesh3.n_tets, 3)))
    assert np.all(b.values == 0.0)


def test_constant_field_reproduced(mesh3, rng):
    phi = ScalarField(LagrangeSpace(mesh3, 1), mesh3.vertices[:, 0].copy())
    g = gradient_edge_field(phi)
    pts = rng.uniform([0, -1, 0], [2, 1, 1], size=(20, 3))
    assert np.allclose(evaluate_edge_field(g, pts), [1.0, 0.0, 0.0], atol=1e-13)
    assert np.allclose(g(pts[:3]), [1.0, 0.0, 0.0], atol=1e-13)
    z = EdgeField(mesh3, np.zeros(mesh3.n_edges))
    assert np.all(evaluate_edge_field(z, pts) == 0.0)
    with pytest.raises(OutOfDomain):
        evaluate_edge_field(g, [[3.0, 0.0, 0.5]])


def test_rotation_field_curl(mesh3):
    b = interpolate_edge(mesh3, lambda x: np.stack([-x[..., 1], x[..., 0], 0 * x[..., 0]], -1))
    assert np.allclose(curl_of_edge_field(b), [0.0, 0.0, 2.0], atol=1e-12)
    # linear fields of this kind lie in the Whitney space: values are exact too
    c = mesh3.centroids
    assert np.allclose(b.centroid_values(), np.stack([-c[:, 1], c[:, 0], 0 * c[:, 0]], 1))


@pytest.fixture(scope="module")
def manufactured_runs():
    out = {}
    for n in (4, 8):
        m = build_box_mesh(*UNIT, n)
        sysm = assemble_curl_div(m)
        b, rep = solve_vector_potential(m, j_exact, system=sysm, return_report=True)
        out[n] = (m, sysm, b, rep)
    return out


def test_manufactured_divergence_and_order(manufactured_runs):
    hs, errs = [], []
    for n, (m, sysm, b, rep) in manufactured_runs.items():
        assert rep.converged
        assert divergence_residual(sysm, b) <= 1e-8 * max(l2_norm(sysm, b), 1.0)
        e = hcurl_error(b, b_exact, j_exact)
        ei = hcurl_error(interpolate_edge(m, b_exact), b_exact, j_exact)
        assert e <= 3.0 * ei
        hs.append(1.0 / n)
        errs.append(e)
    assert fitted_slope(hs, errs) >= 0.9


def test_manufactured_curl_order(manufactured_runs):
    hs, errs = [], []
    for n, (m, sysm, b, rep) in manufactured_runs.items():
        d = curl_of_edge_field(b) - j_exact(m.centroids)
        errs.append(np.sqrt((m.volumes * (d ** 2).sum(1)).sum()))
        hs.append(1.0 / n)
    assert fitted_slope(hs, errs) >= 0.9


def test_gradient_part_of_current_is_invisible(manufactured_runs):
    # psi vanishes on the boundary, so int grad(psi) . curl v = 0 for every edge function v
    m, sysm, b, _ = manufactured_runs[4]

    def grad_psi(x):
        X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
        f = lambda t: t * (1 - t)
        df = lambda t: 1 - 2 * t
        return np.stack([df(X) * f(Y) * f(Z), f(X) * df(Y) * f(Z), f(X) * f(Y) * df(Z)], -1) * 10

    b2 = solve_vector_potential(m, lambda x: j_exact(x) + grad_psi(x), system=sysm)
    assert np.abs(b2.values - b.values).max() <= 1e-10 * np.abs(b.values).max()


def test_unique_for_any_initial_guess(manufactured_runs, rng):
    m, sysm, b, _ = manufactured_runs[4]
    b2 = solve_vector_potential(m, j_exact, system=sysm, x0=rng.standard_normal(m.n_edges),
                                tol=1e-12)
    assert np.abs(b2.values - b.values).max() <= 1e-9 * np.abs(b.values).max()


def test_pointwise_value_fine_mesh():
    m = build_box_mesh(*UNIT, 16)
    b = solve_vector_potential(m, j_exact)
    p = np.array([[0.3, 0.4, 0.5]])
    v, ex = evaluate_edge_field(b, p)[0], b_exact(p)[0]
    assert np.linalg.norm(v - ex) <= 0.05 * np.linalg.norm(ex)


def test_p1_recovery_reproduces_linear_fields(mesh3):
    f = lambda x: np.stack([-x[..., 1], x[..., 0] + 2.0, 0.5 * np.ones(x.shape[:-1])], -1)
    r = p1_recovery(interpolate_edge(mesh3, f))
    assert np.allclose(r.values, f(mesh3.vertices), atol=1e-10)
