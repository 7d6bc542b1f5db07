"""Divergence-free manufactured field on the unit cube with b.n = 0 on every face."""
import numpy as np

PI = np.pi


def b_exact(x):
    X, Y = PI * x[..., 0], PI * x[..., 1]
    return np.stack([PI * np.sin(X) * np.cos(Y), -PI * np.cos(X) * np.sin(Y),
                     np.zeros(x.shape[:-1])], axis=-1)


def j_exact(x):
    X, Y = PI * x[..., 0], PI * x[..., 1]
    return np.stack([np.zeros(x.shape[:-1]), np.zeros(x.shape[:-1]),
                     2 * PI ** 2 * np.sin(X) * np.sin(Y)], axis=-1)
