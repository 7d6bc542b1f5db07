"""Continuous Lagrange elements (P1, P2) on tetrahedra.

Provides the streamline-diffusion (SUPG) transport solver, the pure Neumann
problem that yields the irrotational starting field, and the homogeneous
Dirichlet Poisson problem.
"""
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from .errors import DataError, InvalidArgument
from .mesh import LOCAL_EDGES, TetMesh
from .quadrature import tet_rule, tri_rule
from .sparse import DEFAULT_TOL, assemble_local, normal_equations, solve_spd

VOLUME_DEGREE = 5
FACE_DEGREE = 5
COMPAT_DEGREE = 15
COMPAT_TOL = 1e-8


def face_rule():
    """Face quadrature used for all boundary integrals of this module."""
    return tri_rule(FACE_DEGREE)


# ---------------------------------------------------------------- basis


def basis(degree, bary):
    bary = np.asarray(bary)
    if degree == 1:
        return bary.copy()
    if degree == 2:
        vert = bary * (2.0 * bary - 1.0)
        edge = 4.0 * bary[..., LOCAL_EDGES[:, 0]] * bary[..., LOCAL_EDGES[:, 1]]
        return np.concatenate([vert, edge], axis=-1)
    raise InvalidArgument(f"unsupported degree {degree}")


def basis_dbary(degree, bary):
    """Derivatives of the basis w.r.t. the 4 barycentric coords, (..., nloc, 4)."""
    bary = np.asarray(bary)
    if degree == 1:
        return np.broadcast_to(np.eye(4), bary.shape[:-1] + (4, 4)).copy()
    if degree == 2:
        out = np.zeros(bary.shape[:-1] + (10, 4))
        for i in range(4):
            out[..., i, i] = 4.0 * bary[..., i] - 1.0
        for e, (a, b) in enumerate(LOCAL_EDGES):
            out[..., 4 + e, a] = 4.0 * bary[..., b]
            out[..., 4 + e, b] = 4.0 * bary[..., a]
        return out
    raise InvalidArgument(f"unsupported degree {degree}")


class LagrangeSpace:
    """Degree-k continuous Lagrange space; P2 adds one dof per edge midpoint."""

    def __init__(self, mesh: TetMesh, degree: int = 1):
        if degree not in (1, 2):
            raise InvalidArgument(f"degree must be 1 or 2, got {degree}")
        self.mesh = mesh
        self.degree = degree
        if degree == 1:
            self.cell_dofs = mesh.tets
            self.ndofs = mesh.n_vertices
            self.nodes = mesh.vertices
        else:
            self.cell_dofs = np.hstack([mesh.tets, mesh.n_vertices + mesh.tet_edges])
            self.ndofs = mesh.n_vertices + mesh.n_edges
            mid = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
            self.nodes = np.vstack([mesh.vertices, mid])

    @property
    def nloc(self):
        return self.cell_dofs.shape[1]

    def grads(self, bary, cells=None):
        """Physical basis gradients, (nc, nq, nloc, 3)."""
        g = self.mesh.grad_bary if cells is None else self.mesh.grad_bary[cells]
        d = basis_dbary(self.degree, bary)
        if d.ndim == 3:
            return np.einsum("qla,tai->tqli", d, g)
        return np.einsum("tqla,tai->tqli", d, g)

    def interpolate(self, func):
        vals = np.asarray(func(self.nodes), dtype=float)
        return ScalarField(self, vals)

    def __repr__(self):
        return f"LagrangeSpace(P{self.degree}, ndofs={self.ndofs})"


@dataclass
class ScalarField:
    """Dof vector over a Lagrange space; ``values`` may carry trailing dims."""

    space: LagrangeSpace
    values: np.ndarray

    @property
    def mesh(self):
        return self.space.mesh

    def values_at(self, bary, cells=None):
        dofs = self.space.cell_dofs if cells is None else self.space.cell_dofs[cells]
        N = basis(self.space.degree, bary)
        v = self.values[dofs]  # (nc, nloc, ...)
        if N.ndim == 2:
            return np.einsum("ql,tl...->tq...", N, v)
        return np.einsum("tql,tl...->tq...", N, v)

    def gradient_at(self, bary, cells=None):
        G = self.space.grads(bary, cells)
        dofs = self.space.cell_dofs if cells is None else self.space.cell_dofs[cells]
        return np.einsum("tqli,tl->tqi", G, self.values[dofs])

    def cell_gradients(self):
        """Gradient at tet centroids, (nt, 3); exact per tet for P1."""
        c = np.full((1, 4), 0.25)
        return self.gradient_at(c)[:, 0]

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        flat = pts.reshape(-1, 3)
        cells, bary = self.mesh.locate(flat)
        N = basis(self.space.degree, bary)
        v = self.values[self.space.cell_dofs[cells]]
        out = np.einsum("pl,pl...->p...", N, v)
        return out.reshape(pts.shape[:-1] + out.shape[1:])


def sample(obj, mesh, bary, cells=None):
    """Values of a field at barycentric points of (selected) cells.

    ``obj`` may be a callable of physical points, anything exposing
    ``values_at(bary, cells)``, an array of per-cell values (first axis
    ``n_tets``) or a constant scalar/vector. Returns (nc, nq, ...).
    """
    bary = np.asarray(bary)
    nc = mesh.n_tets if cells is None else len(cells)
    nq = bary.shape[-2]
    if hasattr(obj, "values_at"):
        return obj.values_at(bary, cells)
    if callable(obj):
        if bary.ndim == 2:
            pts = mesh.points(bary, cells)
        else:
            tets = mesh.tets if cells is None else mesh.tets[cells]
            pts = np.einsum("tqa,tai->tqi", bary, mesh.vertices[tets])
        return np.asarray(obj(pts), dtype=float)
    arr = np.asarray(obj, dtype=float)
    if arr.ndim >= 1 and arr.shape[0] == mesh.n_tets and not (arr.ndim == 1 and arr.shape[0] == 3):
        per = arr if cells is None else arr[cells]
        return np.broadcast_to(per[:, None], (nc, nq) + per.shape[1:])
    return np.broadcast_to(arr, (nc, nq) + arr.shape)


# ---------------------------------------------------------------- matrices


def mass_matrix(space):
    bary, w = tet_rule(2 * space.degree)
    N = basis(space.degree, bary)
    W = space.mesh.volumes[:, None] * w[None]
    loc = np.einsum("tq,qi,qj->tij", W, N, N)
    return assemble_local(space.cell_dofs, loc, (space.ndofs, space.ndofs))


def stiffness_matrix(space):
    bary, w = tet_rule(max(2 * space.degree - 2, 1))
    G = space.grads(bary)
    W = space.mesh.volumes[:, None] * w[None]
    loc = np.einsum("tq,tqia,tqja->tij", W, G, G)
    return assemble_local(space.cell_dofs, loc, (space.ndofs, space.ndofs))


def load_vector(space, f, degree=VOLUME_DEGREE):
    bary, w = tet_rule(degree)
    fq = sample(f, space.mesh, bary)
    N = basis(space.degree, bary)
    W = space.mesh.volumes[:, None] * w[None]
    loc = np.einsum("tq,tq...,ql->tl...", W, fq, N)
    out = np.zeros((space.ndofs,) + loc.shape[2:])
    np.add.at(out, space.cell_dofs, loc)
    return out


def boundary_vertices(mesh):
    return np.unique(mesh.bface_vertices)


def _boundary_load(space, g, degree=FACE_DEGREE, faces=None):
    """sum over boundary faces of int g(x, n) v_i dS."""
    mesh = space.mesh
    fb, fw = tri_rule(degree)
    faces = np.arange(mesh.n_bfaces) if faces is None else faces
    pts = mesh.bface_points(fb)[faces]
    nrm = np.broadcast_to(mesh.bface_normals[faces, None], pts.shape)
    gq = np.asarray(g(pts, nrm), dtype=float)
    tb = mesh.bface_tet_bary(fb)[faces]
    N = basis(space.degree, tb)
    loc = np.einsum("f,q,fq,fql->fl", mesh.bface_areas[faces], fw, gq, N)
    out = np.zeros(space.ndofs)
    np.add.at(out, space.cell_dofs[mesh.bface_tets[faces]], loc)
    return out


def boundary_integral(mesh, g, degree=COMPAT_DEGREE):
    """(int g dS, int |g| dS) over the whole boundary."""
    fb, fw = tri_rule(degree)
    pts = mesh.bface_points(fb)
    nrm = np.broadcast_to(mesh.bface_normals[:, None], pts.shape)
    gq = np.asarray(g(pts, nrm), dtype=float)
    a = mesh.bface_areas[:, None] * fw[None]
    return float((a * gq).sum()), float((a * np.abs(gq)).sum())


# ---------------------------------------------------------------- transport


@dataclass
class TransportProblem:
    """``B.grad(u) + sigma u = f`` in the domain, ``u = inflow`` on the inflow boundary.

    ``inflow`` is a boundary evaluator ``(x, n) -> value`` or an array of
    values at the :func:`face_rule` points of every boundary face (only the
    inflow rows are read). ``delta`` fixes a uniform stabilisation; when it
    is None each element gets ``delta_c * h_K / max(|B|_K, B_floor)``.
    """

    B: Any
    sigma: float
    f: Any = 0.0
    inflow: Any = 0.0
    delta: Optional[float] = None
    delta_c: float = 0.5
    B_floor: float = 1e-12


def element_deltas(mesh, prob, Bq=None):
    if prob.delta is not None:
        d = np.full(mesh.n_tets, float(prob.delta))
    else:
        if Bq is None:
            Bq = sample(prob.B, mesh, tet_rule(VOLUME_DEGREE)[0])
        bmax = np.linalg.norm(Bq, axis=-1).max(axis=1)
        d = prob.delta_c * mesh.cell_sizes / np.maximum(bmax, prob.B_floor)
    if np.any(d <= 0):
        raise InvalidArgument("stabilisation parameter must be positive")
    if np.any(d * prob.sigma >= 1.0):
        raise InvalidArgument(
            f"delta_h * sigma = {float((d * prob.sigma).max()):.3g} >= 1: coercivity lost")
    return d


def _inflow_values(prob, mesh, faces, pts, nrm):
    inflow = prob.inflow
    if callable(inflow):
        return np.asarray(inflow(pts, nrm), dtype=float)
    arr = np.asarray(inflow, dtype=float)
    if arr.ndim == 2 and arr.shape[0] == mesh.n_bfaces:
        return arr[faces]
    return np.broadcast_to(arr, pts.shape[:-1])


def supg_system(space, prob, partition):
    """Assembled matrix and load vector of the stabilised transport problem."""
    mesh = space.mesh
    if prob.sigma < 0:
        raise InvalidArgument("reaction coefficient must be non-negative")
    bary, w = tet_rule(VOLUME_DEGREE)
    Bq = sample(prob.B, mesh, bary)
    delta = element_deltas(mesh, prob, Bq)
    fq = sample(prob.f, mesh, bary)
    N = basis(space.degree, bary)
    G = space.grads(bary)
    bg = np.einsum("tqi,tqli->tql", Bq, G)
    test = N[None] + delta[:, None, None] * bg
    trial = bg + prob.sigma * N[None]
    W = mesh.volumes[:, None] * w[None]
    Aloc = np.einsum("tq,tqi,tqj->tij", W, test, trial)
    Floc = np.einsum("tq,tq,tqi->ti", W, fq, test)

    faces = np.asarray(partition.inflow_faces, dtype=int)
    if len(faces):
        fb, fw = face_rule()
        cells = mesh.bface_tets[faces]
        tb = mesh.bface_tet_bary(fb)[faces]
        Bf = sample(prob.B, mesh, tb, cells)
        bn = np.einsum("fqi,fi->fq", Bf, mesh.bface_normals[faces])
        Nf = basis(space.degree, tb)
        pts = mesh.bface_points(fb)[faces]
        nrm = np.broadcast_to(mesh.bface_normals[faces, None], pts.shape)
        gin = _inflow_values(prob, mesh, faces, pts, nrm)
        aw = mesh.bface_areas[faces, None] * fw[None]
        Bloc = np.einsum("fq,fq,fqi,fqj->fij", aw, bn, Nf, Nf)
        Gloc = np.einsum("fq,fq,fq,fqi->fi", aw, gin, bn, Nf)
        # the boundary blocks live on the parent tets: fold them in there
        np.subtract.at(Aloc, cells, Bloc)
        np.subtract.at(Floc, cells, Gloc)

    A = assemble_local(space.cell_dofs, Aloc, (space.ndofs, space.ndofs))
    F = np.zeros(space.ndofs)
    np.add.at(F, space.cell_dofs, Floc)
    return A, F


def solve_transport_supg(mesh, prob, partition, degree=1, tol=1e-12, max_iter=None, x0=None):
    """Stabilised Galerkin solution of the transport problem.

    The non-symmetric system is solved by Jacobi-preconditioned CG on the
    normal equations.
    """
    space = LagrangeSpace(mesh, degree)
    A, F = supg_system(space, prob, partition)
    op = normal_equations(A)
    rhs = A.T @ F
    u, _ = solve_spd(op, rhs, tol=tol, max_iter=max_iter, x0=x0)
    return ScalarField(space, u)


def triple_norm(w, B, sigma, delta):
    """Stability norm: (delta |B.grad w|^2 + sigma |w|^2 + int |B.n| w^2)^(1/2)."""
    space = w.space
    mesh = space.mesh
    bary, qw = tet_rule(VOLUME_DEGREE)
    Bq = sample(B, mesh, bary)
    wq = w.values_at(bary)
    gq = w.gradient_at(bary)
    bgw = np.einsum("tqi,tqi->tq", Bq, gq)
    W = mesh.volumes[:, None] * qw[None]
    delta = np.broadcast_to(np.asarray(delta, dtype=float), (mesh.n_tets,))
    vol = (W * (delta[:, None] * bgw ** 2 + sigma * wq ** 2)).sum()
    fb, fw = face_rule()
    tb = mesh.bface_tet_bary(fb)
    cells = mesh.bface_tets
    Bf = sample(B, mesh, tb, cells)
    bn = np.einsum("fqi,fi->fq", Bf, mesh.bface_normals)
    wf = w.values_at(tb, cells)
    surf = (mesh.bface_areas[:, None] * fw[None] * np.abs(bn) * wf ** 2).sum()
    return float(np.sqrt(vol + surf))


# ---------------------------------------------------------------- elliptic


def solve_neumann_potential(mesh, g, tol=DEFAULT_TOL, compat_tol=COMPAT_TOL):
    """Zero-mean P1 potential with ``grad(phi).n = g`` weakly.

    Compatibility of ``g`` is checked with a high-order face rule; the small
    quadrature inconsistency of the assembled load is then removed before
    the (singular) system is solved.
    """
    total, l1 = boundary_integral(mesh, g)
    if abs(total) > compat_tol * max(l1, np.finfo(float).tiny):
        raise DataError(
            f"boundary data violates the compatibility condition: |int g| = {abs(total):.3e}, "
            f"int |g| = {l1:.3e}")
    space = LagrangeSpace(mesh, 1)
    K = stiffness_matrix(space)
    r = _boundary_load(space, g)
    ones_b = _boundary_load(space, lambda x, n: np.ones(x.shape[:-1]))
    r -= r.sum() * ones_b / ones_b.sum()
    if not np.any(r):
        return ScalarField(space, np.zeros(space.ndofs))

    def project(v):
        return v - v.mean()

    phi, _ = solve_spd(K, r, tol=tol, project=project)
    lumped = np.zeros(space.ndofs)
    np.add.at(lumped, mesh.tets, np.repeat(mesh.volumes[:, None] / 4.0, 4, axis=1))
    phi -= (lumped @ phi) / lumped.sum()
    return ScalarField(space, phi)


def solve_dirichlet_poisson(mesh, f, tol=DEFAULT_TOL):
    """P1 Galerkin solution of ``-lap q = f`` with ``q = 0`` on the boundary."""
    space = LagrangeSpace(mesh, 1)
    K = stiffness_matrix(space)
    F = load_vector(space, f)
    q = np.zeros(space.ndofs)
    free = np.setdiff1d(np.arange(space.ndofs), boundary_vertices(mesh))
    if np.any(F[free]):
        q[free], _ = solve_spd(K[free][:, free], F[free], tol=tol)
    return ScalarField(space, q)


def l2_project_p1(mesh, values, tol=1e-12):
    """L2 projection of per-tet constants (nt, ...) onto P1 (componentwise)."""
    space = LagrangeSpace(mesh, 1)
    M = mesh._cache.get("p1_mass")
    if M is None:
        M = mesh._cache["p1_mass"] = mass_matrix(space)
    vals = np.asarray(values, dtype=float)
    loc = vals[:, None] * (mesh.volumes / 4.0).reshape((-1, 1) + (1,) * (vals.ndim - 1))
    rhs = np.zeros((space.ndofs,) + vals.shape[1:])
    np.add.at(rhs, mesh.tets, loc)
    flat = rhs.reshape(space.ndofs, -1)
    out = np.zeros_like(flat)
    for c in range(flat.shape[1]):
        if np.any(flat[:, c]):
            out[:, c], _ = solve_spd(M, flat[:, c], tol=tol)
    return ScalarField(space, out.reshape(rhs.shape))


def p1_divergence(field):
    """Per-tet divergence of a P1 vector field (values shape (nv, 3))."""
    g = field.mesh.grad_bary
    return np.einsum("tai,tai->t", g, field.values[field.mesh.tets])


def cell_volume_average(mesh, obj, degree=VOLUME_DEGREE):
    """Per-tet mean value of a field."""
    bary, w = tet_rule(degree)
    return np.einsum("q,tq...->t...", w, sample(obj, mesh, bary))


__all__ = [
    "LagrangeSpace", "ScalarField", "TransportProblem", "solve_transport_supg",
    "triple_norm", "solve_neumann_potential", "solve_dirichlet_poisson",
    "supg_system", "mass_matrix", "stiffness_matrix", "load_vector", "sample",
    "l2_project_p1", "p1_divergence", "face_rule", "element_deltas",
]
