"""Tetrahedral meshes of axis-aligned boxes.

The box is cut into ``n**3`` cubes and each cube into the six Kuhn
tetrahedra sharing its main diagonal. Edges carry a global orientation from
the lower to the higher vertex id; ``tet_edges``/``tet_edge_signs`` record how
each local edge relates to it.
"""
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidArgument, OutOfDomain
from .quadrature import tri_rule_3pt

# local edge (a, b) ordering shared by every element routine
LOCAL_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])
# face i is opposite local vertex i
LOCAL_FACES = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])


@dataclass(frozen=True, eq=False)
class TetMesh:
    vertices: np.ndarray  # (nv, 3)
    tets: np.ndarray  # (nt, 4), positively oriented
    edges: np.ndarray  # (ne, 2), low id -> high id
    tet_edges: np.ndarray  # (nt, 6)
    tet_edge_signs: np.ndarray  # (nt, 6) of +-1
    neighbors: np.ndarray  # (nt, 4), tet across face i or -1
    bface_vertices: np.ndarray  # (nbf, 3)
    bface_normals: np.ndarray  # (nbf, 3) outward unit
    bface_areas: np.ndarray  # (nbf,)
    bface_tets: np.ndarray  # (nbf,) parent tet
    bface_local: np.ndarray  # (nbf,) local index of the face in its parent
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_tets(self):
        return len(self.tets)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_bfaces(self):
        return len(self.bface_tets)

    @property
    def lo(self):
        return self.vertices.min(axis=0)

    @property
    def hi(self):
        return self.vertices.max(axis=0)

    @property
    def volumes(self):
        if "volumes" not in self._cache:
            self._geometry()
        return self._cache["volumes"]

    @property
    def grad_bary(self):
        """Gradients of the barycentric coordinates, shape (nt, 4, 3)."""
        if "grad_bary" not in self._cache:
            self._geometry()
        return self._cache["grad_bary"]

    @property
    def centroids(self):
        return self.vertices[self.tets].mean(axis=1)

    @property
    def cell_sizes(self):
        """Longest edge of every tet."""
        if "cell_sizes" not in self._cache:
            x = self.vertices[self.tets]
            d = x[:, LOCAL_EDGES[:, 1]] - x[:, LOCAL_EDGES[:, 0]]
            self._cache["cell_sizes"] = np.linalg.norm(d, axis=-1).max(axis=1)
        return self._cache["cell_sizes"]

    def _geometry(self):
        x = self.vertices[self.tets]
        J = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0], x[:, 3] - x[:, 0]], axis=2)
        det = np.linalg.det(J)
        Jinv = np.linalg.inv(J)
        g = np.empty((len(self.tets), 4, 3))
        g[:, 1:] = Jinv
        g[:, 0] = -Jinv.sum(axis=1)
        self._cache["volumes"] = det / 6.0
        self._cache["grad_bary"] = g

    def points(self, bary, cells=None):
        """Physical coordinates of barycentric points, shape (ncells, nq, 3)."""
        tets = self.tets if cells is None else self.tets[cells]
        return np.einsum("qa,tai->tqi", bary, self.vertices[tets])

    def bface_tet_bary(self, face_bary):
        """Lift face barycentric points into parent-tet barycentric coords.

        Returns shape (nbf, nq, 4).
        """
        nq = len(face_bary)
        out = np.zeros((self.n_bfaces, nq, 4))
        parent = self.tets[self.bface_tets]
        # face vertex k is bface_vertices[:, k]; find its local slot in the parent
        for k in range(3):
            slot = np.argmax(parent == self.bface_vertices[:, k:k + 1], axis=1)
            out[np.arange(self.n_bfaces)[:, None], np.arange(nq)[None, :], slot[:, None]] = face_bary[None, :, k]
        return out

    def bface_points(self, face_bary):
        return np.einsum("qa,fai->fqi", face_bary, self.vertices[self.bface_vertices])

    def locate(self, points, start=None):
        """Containing tet and barycentric coords for each point, by walking.

        Raises OutOfDomain if a point lies outside the mesh.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if "kdtree" not in self._cache:
            self._cache["kdtree"] = cKDTree(self.centroids)
        tree = self._cache["kdtree"]
        cells = np.empty(len(pts), dtype=int)
        barys = np.empty((len(pts), 4))
        g = self.grad_bary
        x0 = self.vertices[self.tets[:, 0]]
        tol = 1e-12
        for i, x in enumerate(pts):
            t = int(tree.query(x)[1]) if start is None else int(start)
            for _ in range(4 * self.n_tets + 10):
                lam = np.empty(4)
                lam[1:] = g[t, 1:] @ (x - x0[t])
                lam[0] = 1.0 - lam[1:].sum()
                k = int(np.argmin(lam))
                if lam[k] >= -tol:
                    break
                nxt = self.neighbors[t, k]
                if nxt < 0:
                    raise OutOfDomain(f"point {x} lies outside the mesh")
                t = nxt
            else:
                raise OutOfDomain(f"point location failed for {x}")
            cells[i] = t
            barys[i] = lam
        return cells, barys


@dataclass(frozen=True)
class BoundaryPartition:
    inflow_faces: np.ndarray
    outflow_faces: np.ndarray
    tangential_faces: np.ndarray


def _from_tets(vertices, tets):
    """Derive edges, neighbours and boundary faces from a tet array."""
    nt = len(tets)
    # orient every tet positively
    x = vertices[tets]
    det = np.einsum("ti,ti->t", x[:, 1] - x[:, 0],
                    np.cross(x[:, 2] - x[:, 0], x[:, 3] - x[:, 0]))
    neg = det < 0
    tets = tets.copy()
    tets[neg, 2], tets[neg, 3] = tets[neg, 3], tets[neg, 2].copy()

    ends = tets[:, LOCAL_EDGES]  # (nt, 6, 2)
    lo = ends.min(axis=2)
    hi = ends.max(axis=2)
    pairs = np.stack([lo.ravel(), hi.ravel()], axis=1)
    edges, inv = np.unique(pairs, axis=0, return_inverse=True)
    tet_edges = inv.reshape(nt, 6)
    tet_edge_signs = np.where(ends[:, :, 0] < ends[:, :, 1], 1, -1)

    faces = np.sort(tets[:, LOCAL_FACES], axis=2).reshape(-1, 3)
    ufaces, finv, counts = np.unique(faces, axis=0, return_inverse=True, return_counts=True)
    finv = finv.reshape(-1)
    if counts.max() > 2:
        raise InvalidArgument("non-manifold tet mesh")
    neighbors = -np.ones((nt, 4), dtype=int)
    order = np.argsort(finv, kind="stable")
    sorted_f = finv[order]
    first = np.flatnonzero(np.r_[True, sorted_f[1:] != sorted_f[:-1]])
    shared = first[counts[sorted_f[first]] == 2]
    a, b = order[shared], order[shared + 1]
    neighbors[a // 4, a % 4] = b // 4
    neighbors[b // 4, b % 4] = a // 4

    bslots = np.flatnonzero(counts[finv] == 1)
    bface_tets = bslots // 4
    bface_local = bslots % 4
    bverts = tets[bface_tets[:, None], LOCAL_FACES[bface_local]]
    p = vertices[bverts]
    cr = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    area = 0.5 * np.linalg.norm(cr, axis=1)
    normal = cr / (2.0 * area[:, None])
    outward = p.mean(axis=1) - vertices[tets[bface_tets]].mean(axis=1)
    flip = np.einsum("fi,fi->f", normal, outward) < 0
    normal[flip] *= -1.0
    bverts[flip, 1], bverts[flip, 2] = bverts[flip, 2], bverts[flip, 1].copy()

    return TetMesh(
        vertices=vertices, tets=tets, edges=edges, tet_edges=tet_edges,
        tet_edge_signs=tet_edge_signs, neighbors=neighbors,
        bface_vertices=bverts, bface_normals=normal, bface_areas=area,
        bface_tets=bface_tets, bface_local=bface_local,
    )


def build_box_mesh(lo, hi, n):
    """Kuhn subdivision of the box ``[lo, hi]`` with ``n`` cubes per axis."""
    lo = np.asarray(lo, dtype=float).reshape(3)
    hi = np.asarray(hi, dtype=float).reshape(3)
    if not np.all(hi > lo):
        raise InvalidArgument(f"degenerate box lo={lo}, hi={hi}")
    if int(n) != n or n < 1:
        raise InvalidArgument(f"subdivisions must be a positive integer, got {n}")
    n = int(n)
    m = n + 1
    axes = [np.linspace(lo[d], hi[d], m) for d in range(3)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    vertices = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def vid(i, j, k):
        return (i * m + j) * m + k

    I, J, K = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    I, J, K = I.ravel(), J.ravel(), K.ravel()
    tets = []
    for perm in permutations(range(3)):
        step = np.zeros(3, dtype=int)
        corners = [vid(I, J, K)]
        for axis in perm:
            step[axis] += 1
            corners.append(vid(I + step[0], J + step[1], K + step[2]))
        tets.append(np.stack(corners, axis=1))
    tets = np.stack(tets, axis=1).reshape(-1, 4)
    return _from_tets(vertices, tets)


def mesh_size(mesh):
    """Longest edge length over the mesh."""
    d = mesh.vertices[mesh.edges[:, 1]] - mesh.vertices[mesh.edges[:, 0]]
    return float(np.linalg.norm(d, axis=1).max())


def classify_inflow(mesh, field, threshold=None):
    """Split boundary faces by the sign of the face-averaged ``B.n``.

    ``field`` is either a callable mapping points (..., 3) to vectors, or an
    array (nbf, 3, 3) of field values at the 3-point face rule. Without an
    explicit ``threshold`` it defaults to ``1e-12 * max|B|``.
    """
    bary, w = tri_rule_3pt()
    if callable(field):
        vals = np.asarray(field(mesh.bface_points(bary)), dtype=float)
    else:
        vals = np.asarray(field, dtype=float)
    bn = np.einsum("fqi,fi->fq", vals, mesh.bface_normals) @ w
    if threshold is None:
        threshold = 1e-12 * float(np.abs(vals).max(initial=0.0))
    if threshold < 0:
        raise InvalidArgument("threshold must be non-negative")
    ids = np.arange(mesh.n_bfaces)
    return BoundaryPartition(
        inflow_faces=ids[bn < -threshold],
        outflow_faces=ids[bn > threshold],
        tangential_faces=ids[np.abs(bn) <= threshold],
    )
