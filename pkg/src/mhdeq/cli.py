"""Command line entry point: ``mhdeq solve --config f`` and ``mhdeq study --config f``.

The config file is flat ``key = value`` text with ``#`` comments. Exit
statuses: 0 success, 2 invalid config or data, 3 solver divergence or
linear-solver breakdown, 4 I/O failure.
"""
import argparse
import logging
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import List, Optional

import numpy as np
from scipy.spatial import cKDTree

from .cases import make_bennett_case, make_fff_case, relative_l2_error
from .equilibrium import SolverConfig, run_equilibrium
from .errors import (DataError, InvalidArgument, LinearSolverError, NumericalBreakdown,
                     SolverDivergence)
from .mesh import build_box_mesh, mesh_size
from .nedelec import p1_recovery
from .output import (write_cell_vectors, write_convergence_csv, write_errors_csv,
                     write_point_scalars)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_IO = 0, 2, 3, 4
CASES = ("fff", "bennett", "custom")
DEFAULT_BOX = {
    "fff": ((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0)),
    "bennett": ((0.5, -1.0, 0.5), (2.5, 1.0, 2.5)),
}
DEFAULT_MODE = {"fff": "force_free_nonlinear", "bennett": "magnetostatic"}


class ConfigError(InvalidArgument):
    pass


@dataclass
class RunConfig:
    """All run options; every field can be set from the config file under its own name."""

    case: str = "fff"
    mode: Optional[str] = None  # None -> per-case default
    lo: Optional[tuple] = None
    hi: Optional[tuple] = None
    n: int = 8
    study_n: List[int] = field(default_factory=list)
    eta: float = 0.05
    epsilon: float = 0.05
    delta_c: float = 0.5
    beta: Optional[float] = None
    tol: float = 1e-6
    max_iter: int = 20
    lambda0: Optional[float] = None
    freeze_inflow: bool = False
    inflow_from: str = "data"
    strict_floor: bool = False
    out_dir: str = "out"
    x0: float = -3.0
    y0: float = -3.0
    lam: float = 1.0
    k: float = 1.0
    boundary_file: Optional[str] = None

    def solver_config(self):
        return SolverConfig(
            mode=self.mode, eta=self.eta, epsilon=self.epsilon, delta_c=self.delta_c,
            beta=self.beta, tol=self.tol, max_iter=self.max_iter, lambda0=self.lambda0,
            freeze_inflow=self.freeze_inflow, inflow_from=self.inflow_from,
            strict_floor=self.strict_floor)


def _parse_bool(s):
    v = s.strip().lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_vec3(s):
    v = tuple(float(t) for t in s.replace(",", " ").split())
    if len(v) != 3:
        raise ValueError(f"expected 3 numbers, got {s!r}")
    return v


def _parse_ints(s):
    return [int(t) for t in s.replace(",", " ").split()]


def _optional(parse):
    def f(s):
        return None if s.strip().lower() in ("", "none", "auto") else parse(s)
    return f


PARSERS = {
    "case": str, "mode": _optional(str), "lo": _parse_vec3, "hi": _parse_vec3, "n": int,
    "study_n": _parse_ints, "eta": float, "epsilon": float, "delta_c": float,
    "beta": _optional(float), "tol": float, "max_iter": int, "lambda0": _optional(float),
    "freeze_inflow": _parse_bool, "inflow_from": str, "strict_floor": _parse_bool,
    "out_dir": str, "x0": float, "y0": float, "lam": float, "k": float,
    "boundary_file": _optional(str),
}
assert set(PARSERS) == {f.name for f in fields(RunConfig)}


def parse_config(text, base_dir=None):
    """RunConfig from ``key = value`` lines; unknown or repeated keys are errors."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (t.strip() for t in line.split("=", 1))
        if key not in PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = PARSERS[key](val)
        except ValueError as e:
            raise ConfigError(f"line {lineno}: bad value for {key}: {e}") from None
    cfg = RunConfig(**values)
    if cfg.boundary_file and base_dir is not None and not os.path.isabs(cfg.boundary_file):
        cfg.boundary_file = str(Path(base_dir) / cfg.boundary_file)
    return finalize(cfg)


def finalize(cfg):
    """Fill per-case defaults and check what can be checked without a mesh."""
    if cfg.case not in CASES:
        raise ConfigError(f"unknown case {cfg.case!r}; expected one of {CASES}")
    if cfg.case == "custom":
        if cfg.boundary_file is None:
            raise ConfigError("case = custom needs boundary_file")
        if cfg.lo is None or cfg.hi is None:
            raise ConfigError("case = custom needs lo and hi")
        if cfg.mode is None:
            cfg.mode = "force_free_nonlinear"
    else:
        lo, hi = DEFAULT_BOX[cfg.case]
        cfg.lo = lo if cfg.lo is None else cfg.lo
        cfg.hi = hi if cfg.hi is None else cfg.hi
        cfg.mode = DEFAULT_MODE[cfg.case] if cfg.mode is None else cfg.mode
    if cfg.n < 1:
        raise ConfigError("n must be a positive integer")
    try:
        cfg.solver_config().validate()
    except InvalidArgument as e:
        raise ConfigError(str(e)) from None
    return cfg


def load_config(path):
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


class BoundaryTable:
    """Per-face boundary data read from CSV rows ``x,y,z,g,h,p0`` at face centroids.

    Evaluators take points on the boundary and return the value of the face
    containing each point.
    """

    def __init__(self, mesh, rows):
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != 6:
            raise DataError("boundary file needs 6 columns x,y,z,g,h,p0")
        cent = mesh.vertices[mesh.bface_vertices].mean(axis=1)
        scale = float(np.ptp(mesh.vertices, axis=0).max())
        dist, idx = cKDTree(rows[:, :3]).query(cent)
        if len(rows) != mesh.n_bfaces or np.any(dist > 1e-8 * scale) \
                or len(np.unique(idx)) != mesh.n_bfaces:
            raise DataError(
                f"boundary file must list each of the {mesh.n_bfaces} boundary face centroids once")
        self.mesh = mesh
        self.values = rows[idx, 3:]
        self._tree = cKDTree(cent)
        self._k = min(12, mesh.n_bfaces)

    @classmethod
    def from_csv(cls, mesh, path):
        try:
            rows = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
        except ValueError as e:
            raise DataError(f"{path}: {e}") from None
        if rows.size and not np.all(np.isfinite(rows)):
            raise DataError(f"{path}: non-finite values")
        return cls(mesh, rows)

    def face_of(self, x, n):
        """Index of the boundary face containing each point (normal used to break ties)."""
        mesh = self.mesh
        pts = np.asarray(x, dtype=float).reshape(-1, 3)
        nrm = np.broadcast_to(np.asarray(n, dtype=float), np.shape(x)).reshape(-1, 3)
        _, cand = self._tree.query(pts, k=self._k)
        cand = cand.reshape(len(pts), -1)
        v = mesh.vertices[mesh.bface_vertices[cand]]  # (np, k, 3, 3)
        e1, e2 = v[:, :, 1] - v[:, :, 0], v[:, :, 2] - v[:, :, 0]
        d = pts[:, None] - v[:, :, 0]
        g11 = np.einsum("pki,pki->pk", e1, e1)
        g12 = np.einsum("pki,pki->pk", e1, e2)
        g22 = np.einsum("pki,pki->pk", e2, e2)
        r1 = np.einsum("pki,pki->pk", d, e1)
        r2 = np.einsum("pki,pki->pk", d, e2)
        det = g11 * g22 - g12 * g12
        s = (g22 * r1 - g12 * r2) / det
        t = (g11 * r2 - g12 * r1) / det
        inside = np.minimum(np.minimum(s, t), 1.0 - s - t)
        off = np.abs(np.einsum("pki,pki->pk", d, mesh.bface_normals[cand]))
        aligned = np.einsum("pki,pi->pk", mesh.bface_normals[cand], nrm) > 0.5
        score = np.where(aligned, inside - off, -np.inf)
        return cand[np.arange(len(pts)), np.argmax(score, axis=1)].reshape(np.shape(x)[:-1])

    def g(self, x, n):
        return self.values[self.face_of(x, n), 0]

    def h(self, x, n):
        return self.values[self.face_of(x, n), 1]

    def p0(self, x, n):
        return self.values[self.face_of(x, n), 2]


@dataclass
class CaseResult:
    h: float
    err_B: float
    err_p: float
    state: object


def _case(cfg):
    if cfg.case == "fff":
        return make_fff_case(cfg.x0, cfg.y0, cfg.lo, cfg.hi)
    if cfg.case == "bennett":
        return make_bennett_case(cfg.lam, cfg.k, cfg.lo, cfg.hi)
    return None


def _write_fields(out, state):
    mesh = state.mesh
    write_cell_vectors(out / "B.vtk", mesh, "B", state.B.centroid_values(), title="B")
    write_point_scalars(out / "p.vtk", mesh, {"p": state.p.values, "mu": state.mu.values},
                        title="p")


def run_case(cfg, out_dir=None, n=None):
    """Solve one mesh and write convergence.csv, errors.csv (analytic cases), B.vtk, p.vtk.

    On divergence the partial convergence history is written before the
    exception propagates.
    """
    n = cfg.n if n is None else n
    mesh = build_box_mesh(cfg.lo, cfg.hi, n)
    cfg.solver_config().validate(mesh)
    case = _case(cfg)
    data = case if case is not None else BoundaryTable.from_csv(mesh, cfg.boundary_file)
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        state = run_equilibrium(mesh, cfg.solver_config(), data)
    except SolverDivergence as e:
        write_convergence_csv(out / "convergence.csv", e.state.residues, e.state.force_residuals)
        raise
    write_convergence_csv(out / "convergence.csv", state.residues, state.force_residuals)
    _write_fields(out, state)
    h = mesh_size(mesh)
    err_B = err_p = float("nan")
    if case is not None:
        err_B = relative_l2_error(p1_recovery(state.B), case.B)
        if not case.force_free:
            err_p = relative_l2_error(state.p, case.p)
        write_errors_csv(out / "errors.csv", [(h, err_B, err_p)])
    return CaseResult(h, err_B, err_p, state)


def fit_slope(h, err):
    """Least-squares slope of log(err) against log(h)."""
    h, err = np.asarray(h, dtype=float), np.asarray(err, dtype=float)
    if len(np.unique(h)) < 2 or not np.all(np.isfinite(err)) or np.any(err <= 0):
        return float("nan")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def run_convergence_study(cfg, out_dir=None):
    """run_case for each n in ``cfg.study_n`` (subdirectories ``n<N>``), then errors.csv with slopes.

    Returns (rows, (slope_B, slope_p)). A failing run aborts the study after
    writing the rows gathered so far.
    """
    ns = list(cfg.study_n)
    if len(ns) != len(set(ns)):
        raise ConfigError("study_n must not repeat a mesh")
    if len(ns) < 3:
        raise ConfigError("a convergence study needs at least 3 distinct n")
    if cfg.case == "custom":
        raise ConfigError("a convergence study needs an analytic case")
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    try:
        for n in ns:
            r = run_case(cfg, out / f"n{n}", n=n)
            rows.append((r.h, r.err_B, r.err_p))
            log.info("n = %d: h = %.5f, err_B = %.4e, err_p = %.4e", n, r.h, r.err_B, r.err_p)
    finally:
        if len(rows) < len(ns):
            write_errors_csv(out / "errors.csv", rows)
    hs = [r[0] for r in rows]
    slopes = (fit_slope(hs, [r[1] for r in rows]), fit_slope(hs, [r[2] for r in rows]))
    write_errors_csv(out / "errors.csv", rows, slopes)
    return rows, slopes


def main(argv=None):
    ap = argparse.ArgumentParser(prog="mhdeq", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=("solve", "study"))
    ap.add_argument("--config", required=True, help="flat key = value config file")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        out = os.environ.get("MHDEQ_OUT") or cfg.out_dir
        if args.command == "solve":
            r = run_case(cfg, out)
            st = r.state
            print(f"iterations {len(st.residues)}, residue {st.residues[-1]:.3e}, "
                  f"converged {st.converged}")
            if np.isfinite(r.err_B):
                print(f"h {r.h:.5f}, err_B_rel {r.err_B:.4e}, err_p_rel {r.err_p:.4e}")
        else:
            rows, slopes = run_convergence_study(cfg, out)
            for h, eb, ep in rows:
                print(f"h {h:.5f}, err_B_rel {eb:.4e}, err_p_rel {ep:.4e}")
            print(f"slope B {slopes[0]:.3f}, slope p {slopes[1]:.3f}")
    except (SolverDivergence, LinearSolverError, NumericalBreakdown) as e:
        print(f"error: solver failed: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (InvalidArgument, DataError) as e:
        print(f"error: invalid input: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"error: I/O failure: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
