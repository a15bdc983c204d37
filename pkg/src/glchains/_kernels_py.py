"""Numpy implementations of the hot kernels (used when the extension is not built).

Layout shared with the compiled module: a field is a C-contiguous float64
array of shape (n_nodes, m) in row-major node order; ``strides`` gives the
flat-index offset of the neighbour along each axis and ``weights`` has shape
(n_axes, n_nodes), holding the weight of the edge from node i to node
i + strides[a] (zero for edges that do not exist).
"""
import numpy as np


def dirichlet(u, weights, strides):
    energy = 0.0
    grad = np.zeros_like(u)
    for a, s in enumerate(strides):
        w = weights[a, :-s]
        d = u[s:] - u[:-s]
        energy += float((w * (d * d).sum(axis=1)).sum())
        wd = (2.0 * w)[:, None] * d
        grad[:-s] -= wd
        grad[s:] += wd
    return energy, grad


def wells(u, node_w):
    """sum_n w_n sum_pairs (|y_pair|^2 - 1)^2 and its gradient (circle / torus wells)."""
    n, m = u.shape
    pairs = u.reshape(n, m // 2, 2)
    r2 = (pairs * pairs).sum(axis=2)
    energy = float((node_w * ((r2 - 1.0) ** 2).sum(axis=1)).sum())
    grad = (4.0 * node_w[:, None, None] * (r2 - 1.0)[:, :, None] * pairs).reshape(n, m)
    return energy, grad


def wrapped_sums(phase):
    """Row sums of principal-branch increments along axis 1, and the largest |increment|."""
    inc = np.diff(phase, axis=1)
    inc = (inc + np.pi) % (2 * np.pi) - np.pi
    return inc.sum(axis=1), np.abs(inc).max(axis=1) if inc.shape[1] else np.zeros(len(phase))
