# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled pairwise-distance kernels (see segcal.kernels._fallback for the
reference semantics: ordered pairs, zero diagonal)."""

from libc.math cimport sqrt

import numpy as np


def pair_dist_sum(x) -> float:
    """Sum of ||x_i - x_j|| over all ordered pairs (i, j)."""
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], d = xv.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double total = 0.0, acc, diff
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                acc = 0.0
                for k in range(d):
                    diff = xv[i, k] - xv[j, k]
                    acc += diff * diff
                total += sqrt(acc)
    return 2.0 * total


def pair_dist_sum_weighted(u, w) -> float:
    """Sum of w_i * w_j * ||u_i - u_j|| over all ordered pairs (i, j)."""
    cdef double[:, ::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    if uv.shape[0] != wv.shape[0]:
        raise ValueError("points and weights differ in length")
    cdef Py_ssize_t n = uv.shape[0], d = uv.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double total = 0.0, acc, diff
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                acc = 0.0
                for k in range(d):
                    diff = uv[i, k] - uv[j, k]
                    acc += diff * diff
                total += wv[i] * wv[j] * sqrt(acc)
    return 2.0 * total
