"""Random consistent saddle systems and their dense direct solution."""
import numpy as np
import scipy.linalg as la
import scipy.sparse as sp


def random_saddle(rng, n=12, rank=None):
    """A = Gp^T Gp (PSD, rank deficient), Bc spanning ker(A), C in range(A)."""
    rank = rank if rank is not None else int(rng.integers(n // 2, n - 1))
    Gp = rng.standard_normal((rank, n))
    A = Gp.T @ Gp
    ker = la.null_space(Gp)  # (n, n - rank)
    # a random basis of the kernel, mixed so Bc is not orthonormal
    Bc = (ker @ rng.standard_normal((ker.shape[1], ker.shape[1]))).T
    C = A @ rng.standard_normal(n)
    return sp.csr_matrix(A), sp.csr_matrix(Bc), C


def dense_saddle_solve(A, Bc, C):
    A, Bc = np.asarray(A.todense()), np.asarray(Bc.todense())
    m = Bc.shape[0]
    K = np.block([[A, Bc.T], [Bc, np.zeros((m, m))]])
    sol = np.linalg.solve(K, np.concatenate([C, np.zeros(m)]))
    return sol[:A.shape[0]], sol[A.shape[0]:]
