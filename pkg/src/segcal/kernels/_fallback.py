"""Numpy implementations of the pairwise-distance kernels.

Both functions sum Euclidean distances over *ordered* pairs, so every
unordered pair contributes twice and the zero diagonal contributes nothing.
Work proceeds in row blocks to bound the size of the materialized distance
blocks at roughly ``_BLOCK_ELEMS`` floats.
"""

import numpy as np

_BLOCK_ELEMS = 4_000_000


def _blocked(x: np.ndarray, row_weight=None, col_weight=None) -> float:
    n = x.shape[0]
    if n < 2:
        return 0.0
    block = max(1, _BLOCK_ELEMS // n)
    total = 0.0
    for start in range(0, n, block):
        stop = min(n, start + block)
        diff = x[start:stop, None, :] - x[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        if row_weight is not None:
            dist *= row_weight[start:stop, None]
            dist *= col_weight[None, :]
        total += float(dist.sum())
    return total


def pair_dist_sum(x) -> float:
    """Sum of ||x_i - x_j|| over all ordered pairs (i, j)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    return _blocked(x)


def pair_dist_sum_weighted(u, w) -> float:
    """Sum of w_i * w_j * ||u_i - u_j|| over all ordered pairs (i, j)."""
    u = np.ascontiguousarray(u, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if u.shape[0] != w.shape[0]:
        raise ValueError("points and weights differ in length")
    return _blocked(u, row_weight=w, col_weight=w)
