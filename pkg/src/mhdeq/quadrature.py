"""Quadrature rules on the reference tetrahedron and triangle.

Rules are returned in barycentric form: ``bary`` has one row per point with
the 4 (resp. 3) barycentric coordinates, ``weights`` sum to one so that
``sum(w * f) * measure`` approximates the integral over a cell.
"""
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


def _gauss_jacobi01(npts, alpha):
    # nodes/weights on [0, 1] for weight (1 - t)**alpha
    x, w = roots_jacobi(npts, alpha, 0.0)
    t = 0.5 * (x + 1.0)
    w = w / 2.0 ** (alpha + 1)
    return t, w


@lru_cache(maxsize=None)
def tet_rule(degree=5):
    """Stroud conical product rule, exact for polynomials of ``degree``."""
    npts = max(1, (degree + 2) // 2)
    u, wu = _gauss_jacobi01(npts, 2.0)
    v, wv = _gauss_jacobi01(npts, 1.0)
    s, ws = _gauss_jacobi01(npts, 0.0)
    U, V, S = np.meshgrid(u, v, s, indexing="ij")
    W = np.einsum("i,j,k->ijk", wu, wv, ws)
    x = U
    y = V * (1.0 - U)
    z = S * (1.0 - U) * (1.0 - V)
    bary = np.stack([1.0 - x - y - z, x, y, z], axis=-1).reshape(-1, 4)
    w = W.reshape(-1)
    w = w / w.sum()
    bary.setflags(write=False)
    w.setflags(write=False)
    return bary, w


@lru_cache(maxsize=None)
def tri_rule(degree=5):
    """Conical product rule on the triangle."""
    npts = max(1, (degree + 2) // 2)
    u, wu = _gauss_jacobi01(npts, 1.0)
    s, ws = _gauss_jacobi01(npts, 0.0)
    U, S = np.meshgrid(u, s, indexing="ij")
    W = np.outer(wu, ws)
    x = U
    y = S * (1.0 - U)
    bary = np.stack([1.0 - x - y, x, y], axis=-1).reshape(-1, 3)
    w = W.reshape(-1)
    w = w / w.sum()
    bary.setflags(write=False)
    w.setflags(write=False)
    return bary, w


def tri_rule_3pt():
    """Classical 3-point interior rule, exact for degree 2."""
    a, b = 2.0 / 3.0, 1.0 / 6.0
    bary = np.array([[a, b, b], [b, a, b], [b, b, a]])
    return bary, np.full(3, 1.0 / 3.0)


def gauss_line(npts=5):
    """Gauss-Legendre points on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w
