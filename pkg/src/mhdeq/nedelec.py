"""Lowest-order edge (Whitney) elements in H(curl).

The basis function of an edge a -> b is ``l_a grad(l_b) - l_b grad(l_a)``;
its degree of freedom is the circulation along the globally oriented edge,
so the gradient of a P1 function has dofs ``phi(head) - phi(tail)``.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .lagrange import LagrangeSpace, ScalarField, load_vector, mass_matrix, sample
from .mesh import LOCAL_EDGES, TetMesh
from .quadrature import gauss_line, tet_rule
from .sparse import (DEFAULT_TOL, ReducedOperator, assemble, assemble_local,
                     balanced_lambda, solve_spd)


def local_curls(mesh):
    """Curl of each (signed) local basis function, (nt, 6, 3)."""
    if "edge_curls" not in mesh._cache:
        g = mesh.grad_bary
        c = 2.0 * np.cross(g[:, LOCAL_EDGES[:, 0]], g[:, LOCAL_EDGES[:, 1]])
        mesh._cache["edge_curls"] = c * mesh.tet_edge_signs[:, :, None]
    return mesh._cache["edge_curls"]


def basis_values(mesh, bary, cells=None):
    """Signed Whitney basis at barycentric points, (nc, nq, 6, 3)."""
    g = mesh.grad_bary if cells is None else mesh.grad_bary[cells]
    s = mesh.tet_edge_signs if cells is None else mesh.tet_edge_signs[cells]
    a, b = LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1]
    bary = np.asarray(bary)
    if bary.ndim == 2:
        la, lb = bary[None, :, a], bary[None, :, b]
    else:
        la, lb = bary[:, :, a], bary[:, :, b]
    w = la[..., None] * g[:, None, b] - lb[..., None] * g[:, None, a]
    return w * s[:, None, :, None]


@dataclass
class EdgeField:
    """Coefficients of the Whitney expansion, one per oriented edge."""

    mesh: TetMesh
    values: np.ndarray

    def values_at(self, bary, cells=None):
        W = basis_values(self.mesh, bary, cells)
        idx = self.mesh.tet_edges if cells is None else self.mesh.tet_edges[cells]
        return np.einsum("tqei,te->tqi", W, self.values[idx])

    def cell_curls(self):
        return curl_of_edge_field(self)

    def centroid_values(self):
        return self.values_at(np.full((1, 4), 0.25))[:, 0]

    def __call__(self, points):
        return evaluate_edge_field(self, points)

    def __add__(self, other):
        return EdgeField(self.mesh, self.values + other.values)

    def __sub__(self, other):
        return EdgeField(self.mesh, self.values - other.values)


def assemble_gradient_map(mesh):
    """Incidence matrix G (edges x vertices): -1 at the tail, +1 at the head."""
    ne = mesh.n_edges
    rows = np.repeat(np.arange(ne), 2)
    cols = mesh.edges.ravel()
    vals = np.tile([-1.0, 1.0], ne)
    return assemble(rows, cols, vals, (ne, mesh.n_vertices))


def assemble_curl_curl(mesh):
    c = local_curls(mesh)
    loc = mesh.volumes[:, None, None] * np.einsum("tia,tja->tij", c, c)
    return assemble_local(mesh.tet_edges, loc, (mesh.n_edges, mesh.n_edges))


def assemble_edge_mass(mesh):
    g = mesh.grad_bary
    vol = mesh.volumes
    gg = np.einsum("tai,tbi->tab", g, g)  # (nt, 4, 4)
    # int l_p l_q = vol (1 + delta_pq) / 20
    I = (np.ones((4, 4)) + np.eye(4)) / 20.0
    a, b = LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1]
    A, Bi = a[:, None], b[:, None]
    C, D = a[None, :], b[None, :]
    loc = (gg[:, Bi, D] * I[A, C] - gg[:, Bi, C] * I[A, D]
           - gg[:, A, D] * I[Bi, C] + gg[:, A, C] * I[Bi, D])
    s = mesh.tet_edge_signs
    loc = loc * vol[:, None, None] * s[:, :, None] * s[:, None, :]
    return assemble_local(mesh.tet_edges, loc, (mesh.n_edges, mesh.n_edges))


@dataclass
class CurlDivSystem:
    A_curl: sp.csr_matrix
    G: sp.csr_matrix
    Me: sp.csr_matrix
    Bc: sp.csr_matrix
    Lam: float


def assemble_curl_div(mesh, Lam=None):
    """All matrices of the mixed curl-div problem; cached on the mesh."""
    key = ("curl_div", Lam)
    if key not in mesh._cache:
        A = assemble_curl_curl(mesh)
        G = assemble_gradient_map(mesh)
        Me = assemble_edge_mass(mesh)
        Bc = (G.T @ Me).tocsr()
        Bc.sort_indices()
        lam = balanced_lambda(A, Bc) if Lam is None else Lam
        mesh._cache[key] = CurlDivSystem(A, G, Me, Bc, lam)
    return mesh._cache[key]


def curl_rhs(mesh, j, degree=5):
    """Load vector ``C[v] = int j . curl v``; ``j`` per-tet constants or an evaluator."""
    arr = None if callable(j) or hasattr(j, "values_at") else np.asarray(j, dtype=float)
    if arr is not None and arr.shape == (mesh.n_tets, 3):
        jint = arr * mesh.volumes[:, None]
    else:
        bary, w = tet_rule(degree)
        jint = mesh.volumes[:, None] * np.einsum("q,tqi->ti", w, sample(j, mesh, bary))
    loc = np.einsum("ti,tei->te", jint, local_curls(mesh))
    C = np.zeros(mesh.n_edges)
    np.add.at(C, mesh.tet_edges, loc)
    return C


def solve_vector_potential(mesh, j, system=None, tol=DEFAULT_TOL, max_iter=None, x0=None,
                           return_report=False):
    """Edge-element solution of ``curl b = j`` (up to gradients), ``div b = 0``, ``b.n = 0``.

    Solves the mixed problem through the reduced operator
    ``A_curl + Bc^T Lam Bc`` with ``Bc = G^T Me``.
    """
    system = assemble_curl_div(mesh) if system is None else system
    C = curl_rhs(mesh, j)
    op = ReducedOperator(system.A_curl, system.Bc, system.Lam)
    x, report = solve_spd(op, C, tol=tol, max_iter=max_iter,
                          x0=None if x0 is None else np.asarray(getattr(x0, "values", x0)))
    b = EdgeField(mesh, x)
    return (b, report) if return_report else b


def curl_of_edge_field(b):
    """Per-tet (constant) curl, (nt, 3)."""
    c = local_curls(b.mesh)
    return np.einsum("tei,te->ti", c, b.values[b.mesh.tet_edges])


def evaluate_edge_field(b, points):
    pts = np.asarray(points, dtype=float)
    flat = pts.reshape(-1, 3)
    cells, bary = b.mesh.locate(flat)
    W = basis_values(b.mesh, bary[:, None, :], cells)[:, 0]
    v = np.einsum("pei,pe->pi", W, b.values[b.mesh.tet_edges[cells]])
    return v.reshape(pts.shape)


def interpolate_edge(mesh, func, npts=5):
    """Edge circulations of a vector field (Gauss rule along each edge)."""
    t, w = gauss_line(npts)
    x0 = mesh.vertices[mesh.edges[:, 0]]
    d = mesh.vertices[mesh.edges[:, 1]] - x0
    pts = x0[:, None] + t[None, :, None] * d[:, None]
    vals = np.asarray(func(pts), dtype=float)
    return EdgeField(mesh, np.einsum("q,eqi,ei->e", w, vals, d))


def gradient_edge_field(phi):
    """Edge field of grad(phi) for a P1 ScalarField (exact)."""
    G = assemble_gradient_map(phi.mesh)
    return EdgeField(phi.mesh, G @ phi.values)


def divergence_residual(system, b):
    """max_i |int b . grad(psi_i)| over P1 hat functions."""
    return float(np.abs(system.Bc @ b.values).max(initial=0.0))


def l2_norm(system, b):
    return float(np.sqrt(max(b.values @ (system.Me @ b.values), 0.0)))


def hcurl_error(b, exact, curl_exact, degree=5):
    """(||b - b_h||^2 + ||curl b - curl b_h||^2)^(1/2)."""
    mesh = b.mesh
    bary, w = tet_rule(degree)
    pts = mesh.points(bary)
    W = mesh.volumes[:, None] * w[None]
    e0 = ((np.asarray(exact(pts)) - b.values_at(bary)) ** 2).sum(-1)
    e1 = ((np.asarray(curl_exact(pts)) - curl_of_edge_field(b)[:, None]) ** 2).sum(-1)
    return float(np.sqrt((W * (e0 + e1)).sum()))


def p1_recovery(b, tol=1e-13):
    """L2 projection of an edge field onto continuous P1 vector fields.

    Used for the B error metric: the raw Whitney field is only first-order
    accurate in L2, its continuous projection is close to second order.
    """
    mesh = b.mesh
    space = LagrangeSpace(mesh, 1)
    M = mesh._cache.get("p1_mass")
    if M is None:
        M = mesh._cache["p1_mass"] = mass_matrix(space)
    rhs = load_vector(space, b)
    vals = np.stack([solve_spd(M, rhs[:, c], tol=tol)[0] for c in range(3)], axis=1)
    return ScalarField(space, vals)


__all__ = [
    "EdgeField", "CurlDivSystem", "assemble_gradient_map", "assemble_curl_curl",
    "assemble_edge_mass", "assemble_curl_div", "curl_rhs", "solve_vector_potential",
    "curl_of_edge_field", "evaluate_edge_field", "interpolate_edge",
    "gradient_edge_field", "divergence_residual", "p1_recovery", "hcurl_error", "l2_norm",
]
