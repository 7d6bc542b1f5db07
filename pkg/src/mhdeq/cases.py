"""Closed-form verification fields and the error metrics used against them."""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InvalidArgument
from .lagrange import ScalarField
from .nedelec import EdgeField, curl_of_edge_field
from .quadrature import tet_rule


@dataclass(frozen=True)
class AnalyticCase:
    """An exact (B, p) pair on a box; all evaluators are vectorised over (..., 3)."""

    name: str
    B: Callable
    curl_B: Callable
    p: Callable
    grad_p: Callable
    lo: tuple
    hi: tuple
    lambda_exact: Optional[Callable] = None
    force_free: bool = False

    def g(self, x, n):
        """Normal component B.n on the boundary."""
        return np.einsum("...i,...i->...", self.B(x), n)

    def h(self, x, n):
        """Normal current curl(B).n on the boundary."""
        return np.einsum("...i,...i->...", self.curl_B(x), n)

    def p0(self, x, n=None):
        return self.p(x)


def _check_box(lo, hi):
    lo = tuple(float(v) for v in lo)
    hi = tuple(float(v) for v in hi)
    if len(lo) != 3 or len(hi) != 3 or not all(b > a for a, b in zip(lo, hi)):
        raise InvalidArgument(f"invalid box {lo} - {hi}")
    return lo, hi


def make_fff_case(x0=-3.0, y0=-3.0, lo=(-1.0, -1.0, -1.0), hi=(1.0, 1.0, 1.0)):
    """Non-linear force-free field B = r^(-1/2) (e_theta + e_z) about the line (x0, y0).

    curl B = B / (2r), so lambda = 1 / (2r) and p = 0.
    """
    lo, hi = _check_box(lo, hi)
    if lo[0] <= x0 <= hi[0] and lo[1] <= y0 <= hi[1]:
        raise InvalidArgument("the field axis r = 0 intersects the domain")

    def parts(x):
        dx = x[..., 0] - x0
        dy = x[..., 1] - y0
        r = np.hypot(dx, dy)
        return dx, dy, r

    def B(x):
        dx, dy, r = parts(x)
        s = r ** -1.5
        return np.stack([-dy * s, dx * s, r ** -0.5], axis=-1)

    def lam(x):
        return 0.5 / parts(x)[2]

    def curl_B(x):
        return B(x) * lam(x)[..., None]

    def p(x):
        return np.zeros(np.shape(x)[:-1])

    def grad_p(x):
        return np.zeros(np.shape(x))

    return AnalyticCase("fff", B, curl_B, p, grad_p, lo, hi, lambda_exact=lam, force_free=True)


def make_bennett_case(lam=1.0, k=1.0, lo=(0.5, -1.0, 0.5), hi=(2.5, 1.0, 2.5)):
    """Bennett pinch B = grad(A) x e_y with A = -ln((1 + lam k^2 (x^2 + z^2)) / (2k)).

    The pressure balancing ``curl B x B + grad p = 0`` is
    ``p = 2 lam k^2 - (lam / 2) exp(2A)``: the additive constant is the
    supremum of the second term, so p >= 0 and vanishes only on the axis.
    """
    if lam <= 0 or k <= 0:
        raise InvalidArgument("lam and k must be positive")
    lo, hi = _check_box(lo, hi)
    if lo[0] <= 0.0 <= hi[0] and lo[2] <= 0.0 <= hi[2]:
        raise InvalidArgument("the pinch axis x = z = 0 intersects the domain")
    c = lam * k * k

    def s(x):
        return 1.0 + c * (x[..., 0] ** 2 + x[..., 2] ** 2)

    def B(x):
        f = 2.0 * c / s(x)
        return np.stack([x[..., 2] * f, np.zeros_like(f), -x[..., 0] * f], axis=-1)

    def curl_B(x):
        # curl B = -lap(A) e_y and lap(A) = -4 c / s^2
        return np.stack([np.zeros(x.shape[:-1]), 4.0 * c / s(x) ** 2, np.zeros(x.shape[:-1])],
                        axis=-1)

    def p(x):
        return 2.0 * c - 2.0 * c / s(x) ** 2

    def grad_p(x):
        f = 8.0 * c * c / s(x) ** 3
        return np.stack([x[..., 0] * f, np.zeros(x.shape[:-1]), x[..., 2] * f], axis=-1)

    return AnalyticCase("bennett", B, curl_B, p, grad_p, lo, hi)


def bennett_printed_pressure(x, lam=1.0, k=1.0):
    """(lam/2) exp(2A) exactly as printed; kept only for the sign check."""
    A = -np.log((1.0 + lam * k * k * (x[..., 0] ** 2 + x[..., 2] ** 2)) / (2.0 * k))
    return 0.5 * lam * np.exp(2.0 * A)


def _numeric_values(numeric, mesh, bary):
    if isinstance(numeric, (ScalarField, EdgeField)):
        return numeric.values_at(bary)
    arr = np.asarray(numeric, dtype=float)
    if mesh is None or arr.shape[0] != mesh.n_tets:
        raise InvalidArgument("per-tet values need the matching mesh")
    return np.broadcast_to(arr[:, None], (mesh.n_tets, len(bary)) + arr.shape[1:])


def relative_l2_error(numeric, exact, mesh=None, degree=5):
    """||exact - numeric|| / ||exact|| in L2 over the mesh."""
    if mesh is None:
        mesh = numeric.mesh
    bary, w = tet_rule(degree)
    ex = np.asarray(exact(mesh.points(bary)), dtype=float)
    num = _numeric_values(numeric, mesh, bary)
    W = mesh.volumes[:, None] * w[None]
    d2 = (ex - num) ** 2
    e2 = ex ** 2
    if ex.ndim == 3:
        d2, e2 = d2.sum(-1), e2.sum(-1)
    denom = float((W * e2).sum())
    if denom == 0.0:
        raise InvalidArgument("exact field has zero norm")
    return float(np.sqrt((W * d2).sum() / denom))


def force_residual_inf(B, p=None, sample=None):
    """max |curl B x B + grad p| over sample points.

    ``B`` is an EdgeField (samples are tet centroids; curl per tet) or an
    AnalyticCase (``sample`` points required). ``p`` is a P1 ScalarField, an
    AnalyticCase (exact gradient) or None to drop the pressure term.
    """
    if isinstance(B, EdgeField):
        mesh = B.mesh
        if sample is not None:
            raise InvalidArgument("discrete residual is sampled at tet centroids")
        curl = curl_of_edge_field(B)
        Bv = B.centroid_values()
        r = np.cross(curl, Bv)
        if isinstance(p, ScalarField):
            r = r + p.cell_gradients()
        elif isinstance(p, AnalyticCase):
            r = r + p.grad_p(mesh.centroids)
    elif isinstance(B, AnalyticCase):
        if sample is None:
            raise InvalidArgument("analytic residual needs sample points")
        pts = np.asarray(sample, dtype=float).reshape(-1, 3)
        if len(pts) == 0:
            raise InvalidArgument("empty sample set")
        r = np.cross(B.curl_B(pts), B.B(pts))
        if isinstance(p, AnalyticCase):
            r = r + p.grad_p(pts)
    else:
        raise InvalidArgument(f"unsupported field type {type(B).__name__}")
    if len(r) == 0:
        raise InvalidArgument("empty sample set")
    return float(np.linalg.norm(r, axis=-1).max())
