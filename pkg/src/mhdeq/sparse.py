"""Sparse assembly, preconditioned CG and the reduced saddle-point solve.

Matrices are ``scipy.sparse.csr_matrix`` objects in canonical form (sorted
column indices, duplicates summed, no stored zeros).
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from .errors import InvalidArgument, LinearSolverError, NumericalBreakdown

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class LinearSolveReport:
    iterations: int
    residual: float
    converged: bool


def assemble(rows, cols, values, shape):
    """Build a canonical CSR matrix from triplets; duplicates are summed."""
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    values = np.asarray(values, dtype=float).ravel()
    if not (len(rows) == len(cols) == len(values)):
        raise InvalidArgument("triplet arrays differ in length")
    nr, nc = shape
    if len(rows) and (rows.min() < 0 or rows.max() >= nr or cols.min() < 0 or cols.max() >= nc):
        raise InvalidArgument("triplet index out of range")
    A = sp.coo_matrix((values, (rows, cols)), shape=shape).tocsr()
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    return A


def assemble_triplets(triplets, shape):
    if len(triplets) == 0:
        return assemble([], [], [], shape)
    r, c, v = zip(*triplets)
    return assemble(r, c, v, shape)


def assemble_local(cell_dofs, local, shape, cell_dofs_col=None):
    """Scatter per-cell dense blocks (nc, m, k) into a global CSR matrix."""
    cols = cell_dofs if cell_dofs_col is None else cell_dofs_col
    m, k = local.shape[1:]
    R = np.repeat(cell_dofs[:, :, None], k, axis=2)
    C = np.repeat(cols[:, None, :], m, axis=1)
    return assemble(R, C, local, shape)


def diagonal(A):
    if sp.issparse(A):
        return A.diagonal()
    if hasattr(A, "diagonal"):
        return A.diagonal()
    raise InvalidArgument("operator exposes no diagonal for Jacobi preconditioning")


def cg_solve(A, rhs, tol=DEFAULT_TOL, max_iter=None, preconditioner="jacobi", x0=None,
             project=None, callback=None):
    """Preconditioned conjugate gradients for symmetric positive (semi)definite A.

    Stops when ``||rhs - A x|| <= tol * ||rhs||``. Non-convergence is
    reported through ``LinearSolveReport.converged``; NaNs raise
    NumericalBreakdown. ``project`` (optional) is applied to every residual,
    which keeps iterates in a complement of a known null space.
    """
    b = np.asarray(rhs, dtype=float)
    n = b.shape[0]
    if A.shape[0] != n or A.shape[1] != n:
        raise InvalidArgument(f"shape mismatch: A{A.shape} vs rhs({n})")
    if max_iter is None:
        max_iter = 10 * n + 100
    if preconditioner == "jacobi":
        d = np.asarray(diagonal(A), dtype=float)
        dinv = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 1.0)
    elif preconditioner in (None, "none"):
        dinv = None
    else:
        raise InvalidArgument(f"unknown preconditioner {preconditioner!r}")

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), LinearSolveReport(0, 0.0, True)
    r = b - A @ x if x0 is not None else b.copy()
    if project is not None:
        r = project(r)
    res = np.linalg.norm(r) / bnorm
    if res <= tol:
        return x, LinearSolveReport(0, float(res), True)
    z = r * dinv if dinv is not None else r.copy()
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        Ap = A @ p
        pAp = p @ Ap
        if not np.isfinite(pAp):
            raise NumericalBreakdown(f"non-finite value in CG at iteration {it}")
        if pAp <= 0.0:
            raise NumericalBreakdown(f"operator not positive definite (p.Ap = {pAp:g})")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if project is not None:
            r = project(r)
        res = np.linalg.norm(r) / bnorm
        if callback is not None:
            callback(x)
        if not np.isfinite(res):
            raise NumericalBreakdown(f"non-finite residual at iteration {it}")
        if res <= tol:
            return x, LinearSolveReport(it, float(res), True)
        z = r * dinv if dinv is not None else r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, LinearSolveReport(max_iter, float(res), False)


def solve_spd(A, rhs, tol=DEFAULT_TOL, max_iter=None, **kw):
    """cg_solve that raises LinearSolverError instead of returning a failure."""
    x, report = cg_solve(A, rhs, tol=tol, max_iter=max_iter, **kw)
    if not report.converged:
        raise LinearSolverError(
            f"CG did not converge: residual {report.residual:.3e} after {report.iterations} iterations",
            report)
    return x, report


def normal_equations(A):
    """Operator A^T A with its diagonal, for CG on non-symmetric systems."""
    A = sp.csr_matrix(A)
    At = A.T.tocsr()
    diag = np.asarray(A.multiply(A).sum(axis=0)).ravel()
    op = LinearOperator(A.shape, matvec=lambda x: At @ (A @ x), dtype=float)
    op.diagonal = lambda: diag
    return op


class ReducedOperator(LinearOperator):
    """Matrix-free ``A + Bc^T Lam Bc``."""

    def __init__(self, A, Bc, Lam):
        super().__init__(dtype=float, shape=A.shape)
        self.A, self.Bc, self.Lam = A, Bc, Lam

    def _apply_lam(self, y):
        if np.isscalar(self.Lam):
            return self.Lam * y
        return self.Lam @ y

    def _matvec(self, x):
        x = np.ravel(x)
        return self.A @ x + self.Bc.T @ self._apply_lam(self.Bc @ x)

    def diagonal(self):
        Bsq = self.Bc.multiply(self.Bc)
        if np.isscalar(self.Lam):
            lam_d = np.full(self.Bc.shape[0], float(self.Lam))
        else:
            lam_d = np.asarray(self.Lam.diagonal(), dtype=float)
        return diagonal(self.A) + np.asarray(Bsq.T @ lam_d).ravel()


def default_lambda(A):
    """Identity scaled by trace(A) / rows(A)."""
    return float(diagonal(A).sum()) / A.shape[0]


def balanced_lambda(A, Bc):
    """Scalar making ``Bc^T Lam Bc`` comparable to A: trace(A) / (4 ||Bc||_F^2).

    Invariant under rescaling of the mesh, unlike :func:`default_lambda`.
    """
    return float(diagonal(A).sum()) / (4.0 * float(Bc.multiply(Bc).sum()))


def reduced_saddle_solve(A, Bc, C, Lam=None, tol=DEFAULT_TOL, max_iter=None, x0=None):
    """Solve [[A, Bc^T], [Bc, 0]] (X, Y) = (C, 0) through (A + Bc^T Lam Bc) X = C.

    ``Lam`` is any SPD matrix (or a positive scalar meaning ``Lam * I``);
    the saddle solution has Y = 0, so only X is returned.
    """
    if Lam is None:
        Lam = default_lambda(A)
    if np.isscalar(Lam) and Lam <= 0:
        raise InvalidArgument("Lam must be positive definite")
    op = ReducedOperator(A, Bc, Lam)
    X, report = solve_spd(op, C, tol=tol, max_iter=max_iter, x0=x0)
    return X
