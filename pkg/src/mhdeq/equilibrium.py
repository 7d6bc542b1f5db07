"""Outer iteration for magnetostatic and force-free equilibria.

Each pass transports the pressure along the current field, forms the
perpendicular current ``(grad p x B) / |B|^2``, transports the parallel
coefficient ``mu`` and finally recomputes the field as the irrotational part
``B0`` plus a divergence-free edge-element correction whose curl matches
``mu B + omega_perp``.
"""
import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .errors import DegenerateFieldWarning, InvalidArgument, SolverDivergence
from .lagrange import (LagrangeSpace, ScalarField, TransportProblem, _boundary_load,
                       cell_volume_average, face_rule, l2_project_p1, p1_divergence,
                       solve_neumann_potential, solve_transport_supg)
from .mesh import classify_inflow, mesh_size
from .nedelec import (EdgeField, assemble_curl_div, curl_of_edge_field, gradient_edge_field,
                      l2_norm, solve_vector_potential)
from .quadrature import tri_rule_3pt

log = logging.getLogger(__name__)

MODES = ("magnetostatic", "force_free_nonlinear", "force_free_linear")
FLOOR_FRACTION = 0.10


@dataclass
class SolverConfig:
    mode: str = "force_free_nonlinear"
    eta: float = 0.05
    epsilon: float = 0.05
    delta_c: float = 0.5
    beta: Optional[float] = None  # |B| floor; None -> 1e-3 * rms|B0|
    tol: float = 1e-6
    max_iter: int = 20
    lambda0: Optional[float] = None
    freeze_inflow: bool = False
    inflow_from: str = "data"  # "data": sign of g; "field": sign of B^(n).n
    strict_floor: bool = False
    linear_tol: float = 1e-10
    transport_tol: float = 1e-12

    def validate(self, mesh=None):
        if self.mode not in MODES:
            raise InvalidArgument(f"unknown mode {self.mode!r}; expected one of {MODES}")
        for name in ("eta", "epsilon", "delta_c", "tol", "linear_tol", "transport_tol"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be positive")
        if self.beta is not None and not self.beta > 0:
            raise InvalidArgument("beta must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise InvalidArgument("max_iter must be a positive integer")
        if self.inflow_from not in ("data", "field"):
            raise InvalidArgument("inflow_from must be 'data' or 'field'")
        if self.mode == "force_free_linear" and self.lambda0 is None:
            raise InvalidArgument("force_free_linear needs lambda0")
        if mesh is not None:
            dh = self.delta_c * mesh_size(mesh)
            if dh * max(self.eta, self.epsilon) >= 1.0:
                raise InvalidArgument(
                    f"delta_h * max(eta, epsilon) = {dh * max(self.eta, self.epsilon):.3g} >= 1")
        return self


@dataclass
class EquilibriumState:
    mesh: object
    n: int
    phi: ScalarField
    B0: EdgeField
    b: EdgeField
    B: EdgeField
    p: ScalarField
    mu: ScalarField
    omega_perp: np.ndarray
    omega: np.ndarray
    beta: float
    residues: List[float] = field(default_factory=list)
    force_residuals: List[float] = field(default_factory=list)
    partition: object = None
    converged: bool = False

    def snapshot(self):
        return replace(self, residues=list(self.residues),
                       force_residuals=list(self.force_residuals))


def _get(data, name):
    if isinstance(data, dict):
        return data.get(name)
    return getattr(data, name, None)


def init_b0(mesh, g):
    """Irrotational starting field ``B0 = grad(phi)`` with ``B0.n = g``."""
    phi = solve_neumann_potential(mesh, g)
    B0 = gradient_edge_field(phi)
    space = phi.space
    zero = np.zeros(space.ndofs)
    nt = mesh.n_tets
    return EquilibriumState(
        mesh=mesh, n=0, phi=phi, B0=B0, b=EdgeField(mesh, np.zeros(mesh.n_edges)), B=B0,
        p=ScalarField(space, zero.copy()), mu=ScalarField(space, zero.copy()),
        omega_perp=np.zeros((nt, 3)), omega=np.zeros((nt, 3)), beta=0.0,
    )


def _check_nondegenerate(state, config):
    Bc = state.B0.centroid_values()
    ms = float((np.einsum("ti,ti->t", Bc, Bc) * state.mesh.volumes).sum() / state.mesh.volumes.sum())
    if ms == 0.0:
        raise InvalidArgument("degenerate initial field: B0 vanishes identically")
    beta = config.beta if config.beta is not None else float(np.sqrt(1e-6 * ms))
    frac = float(np.mean(np.linalg.norm(Bc, axis=1) < beta))
    if frac > FLOOR_FRACTION:
        raise InvalidArgument(f"degenerate initial field: |B0| < beta on {100 * frac:.1f}% of tets")
    return beta


def _face_values(mesh, B):
    """B at the 3-point rule on every boundary face, via the parent tets."""
    tb = mesh.bface_tet_bary(tri_rule_3pt()[0])
    return B.values_at(tb, mesh.bface_tets)


def current_partition(state, config, g=None):
    """Inflow faces for the current pass.

    Every iterate carries ``B.n = g`` on the boundary, so by default the
    partition follows the sign of ``g`` (free of discretisation noise on
    walls where the field is tangential); ``inflow_from="field"`` uses the
    discrete ``B^(n).n`` instead.
    """
    if config.freeze_inflow and state.partition is not None:
        return state.partition
    mesh = state.mesh
    if config.inflow_from == "data" and g is not None:
        pts = mesh.bface_points(tri_rule_3pt()[0])
        nrm = np.broadcast_to(mesh.bface_normals[:, None], pts.shape)
        gq = np.asarray(g(pts, nrm), dtype=float)
        vals = gq[..., None] * mesh.bface_normals[:, None]
    else:
        vals = _face_values(mesh, state.B)
    thr = 1e-12 * float(np.abs(vals).max(initial=0.0))
    return classify_inflow(mesh, vals, thr)


def pressure_step(state, config, p0, partition=None):
    """Relaxed transport ``B.grad p + eta p = eta p_prev`` with ``p = p0`` on inflow."""
    partition = current_partition(state, config) if partition is None else partition
    prob = TransportProblem(B=state.B, sigma=config.eta, f=ScalarField(state.p.space, config.eta * state.p.values),
                            inflow=p0, delta_c=config.delta_c, B_floor=max(state.beta, 1e-300))
    return solve_transport_supg(state.mesh, prob, partition, tol=config.transport_tol,
                                x0=state.p.values)


def compute_omega_perp(state, config, p=None):
    """Per-tet ``(grad p x B) / max(|B|^2, beta^2)`` at tet centroids."""
    p = state.p if p is None else p
    gp = p.cell_gradients()
    Bc = state.B.centroid_values()
    b2 = np.einsum("ti,ti->t", Bc, Bc)
    floored = b2 < state.beta ** 2
    frac = float(floored.mean())
    if frac > FLOOR_FRACTION:
        msg = f"|B| below the floor on {100 * frac:.1f}% of tets"
        if config.strict_floor:
            raise InvalidArgument(msg)
        warnings.warn(msg, DegenerateFieldWarning, stacklevel=2)
    return np.cross(gp, Bc) / np.maximum(b2, state.beta ** 2)[:, None]


def _mu_inflow(state, omega_perp, h, g):
    """(h - omega_perp.n) / g at the transport face rule on every boundary face."""
    mesh = state.mesh
    fb, _ = face_rule()
    pts = mesh.bface_points(fb)
    nrm = np.broadcast_to(mesh.bface_normals[:, None], pts.shape)
    hq = np.asarray(h(pts, nrm), dtype=float) if h is not None else np.zeros(pts.shape[:-1])
    on = np.einsum("fi,fi->f", omega_perp[mesh.bface_tets], mesh.bface_normals)
    num = hq - on[:, None]
    gq = np.asarray(g(pts, nrm), dtype=float)
    inflow = gq < -state.beta
    return np.where(inflow, num / np.where(inflow, gq, 1.0), 0.0)


def mu_step(state, config, h, g, omega_perp=None, partition=None):
    """Relaxed transport of mu with source ``-div(omega_perp)``.

    On the inflow boundary ``mu (B.n) = h - omega_perp.n``; the prescribed
    normal field ``g`` stands in for ``B.n`` there (zero datum where
    ``g >= -beta``).
    """
    if config.mode == "force_free_linear":
        raise InvalidArgument("mu is fixed to lambda0 in force_free_linear mode")
    omega_perp = state.omega_perp if omega_perp is None else omega_perp
    partition = current_partition(state, config, g) if partition is None else partition
    mesh = state.mesh
    f = np.zeros(mesh.n_tets)
    if np.any(omega_perp):
        f = -p1_divergence(l2_project_p1(mesh, omega_perp))
    source = _MuSource(state.mu, config.epsilon, f)
    prob = TransportProblem(B=state.B, sigma=config.epsilon, f=source,
                            inflow=_mu_inflow(state, omega_perp, h, g),
                            delta_c=config.delta_c, B_floor=max(state.beta, 1e-300))
    return solve_transport_supg(mesh, prob, partition, tol=config.transport_tol,
                                x0=state.mu.values)


class _MuSource:
    """``eps * mu_prev + cell source`` evaluated at quadrature points."""

    def __init__(self, mu_prev, eps, cell_source):
        self.mu_prev, self.eps, self.cell_source = mu_prev, eps, cell_source

    def values_at(self, bary, cells=None):
        v = self.eps * self.mu_prev.values_at(bary, cells)
        c = self.cell_source if cells is None else self.cell_source[cells]
        return v + c[:, None]


class _Current:
    def __init__(self, mu, B, omega_perp):
        self.mu, self.B, self.omega_perp = mu, B, omega_perp

    def values_at(self, bary, cells=None):
        w = self.mu.values_at(bary, cells)[..., None] * self.B.values_at(bary, cells)
        op = self.omega_perp if cells is None else self.omega_perp[cells]
        return w + op[:, None]


def field_update(state, config, mu=None, omega_perp=None):
    """New correction b (and B = B0 + b) from the current ``mu B + omega_perp``.

    Returns (b, B, per-tet mean of mu B, per-tet omega).
    """
    mesh = state.mesh
    mu = state.mu if mu is None else mu
    omega_perp = state.omega_perp if omega_perp is None else omega_perp
    par = cell_volume_average(mesh, _Current(mu, state.B, np.zeros_like(omega_perp)))
    omega = par + omega_perp
    system = assemble_curl_div(mesh)
    if not np.any(omega):
        b = EdgeField(mesh, np.zeros(mesh.n_edges))
    else:
        b = solve_vector_potential(mesh, omega, system=system, tol=config.linear_tol,
                                   x0=state.b.values)
    return b, state.B0 + b, par, omega


def run_equilibrium(mesh, config, data, callback=None):
    """Iterate to an equilibrium; ``data`` provides boundary evaluators g, h, p0.

    ``callback`` (optional) receives a snapshot of the state after every
    pass, taken before the new field replaces the old one, together with
    the new correction ``b`` and current ``omega``.
    """
    config.validate(mesh)
    g, h, p0 = _get(data, "g"), _get(data, "h"), _get(data, "p0")
    if g is None:
        raise InvalidArgument("boundary data must provide g")
    magnetostatic = config.mode == "magnetostatic"
    if magnetostatic and p0 is None:
        raise InvalidArgument("magnetostatic mode needs the inflow pressure p0")

    state = init_b0(mesh, g)
    state.beta = _check_nondegenerate(state, config)
    system = assemble_curl_div(mesh)
    space = LagrangeSpace(mesh, 1)
    if config.mode == "force_free_linear":
        state.mu = ScalarField(space, np.full(space.ndofs, float(config.lambda0)))
    stalled = 0

    for n in range(int(config.max_iter)):
        state.n = n
        part = current_partition(state, config, g)
        state.partition = part
        if magnetostatic:
            state.p = pressure_step(state, config, p0, part)
            state.omega_perp = compute_omega_perp(state, config)
        if config.mode != "force_free_linear":
            state.mu = mu_step(state, config, h, g, partition=part)
        state.force_residuals.append(_force_residual(state, magnetostatic))

        b, B_new, _, omega = field_update(state, config)
        res = l2_norm(system, B_new - state.B) / max(l2_norm(system, state.B), 1e-300)
        state.residues.append(res)
        if callback is not None:
            callback(state.snapshot(), b, omega)
        state.b, state.B, state.omega = b, B_new, omega
        log.info("iteration %d: residue %.4e, force residual %.4e", n, res, state.force_residuals[-1])

        if res <= config.tol:
            state.converged = True
            break
        if len(state.residues) > 1 and res >= state.residues[-2]:
            stalled += 1
            if stalled >= 3:
                raise SolverDivergence(
                    f"residue did not decrease for 3 consecutive iterations (last {res:.3e})",
                    state)
        else:
            stalled = 0
    return state


def _force_residual(state, with_pressure):
    curl = curl_of_edge_field(state.B)
    r = np.cross(curl, state.B.centroid_values())
    if with_pressure:
        r = r + state.p.cell_gradients()
    return float(np.linalg.norm(r, axis=1).max())


def boundary_flux_residual(state, g):
    """max_i |int B . grad(psi_i) - int g psi_i| over P1 hat functions, and int |g|."""
    mesh = state.mesh
    system = assemble_curl_div(mesh)
    space = LagrangeSpace(mesh, 1)
    weak = system.Bc @ state.B.values
    rhs = _boundary_load(space, g)
    l1 = _boundary_load(space, lambda x, n: np.abs(g(x, n))).sum()
    return float(np.abs(weak - rhs).max()), float(l1)
