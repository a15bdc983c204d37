# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in _kernels_py (same layout and results)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport M_PI, fabs, floor

cnp.import_array()


def dirichlet(double[:, ::1] u, double[:, ::1] weights, strides):
    cdef Py_ssize_t n = u.shape[0], m = u.shape[1]
    cdef Py_ssize_t a, i, c, s
    cdef double w, d, wd, energy = 0.0, acc
    grad_arr = np.zeros((n, m))
    cdef double[:, ::1] g = grad_arr
    for a in range(len(strides)):
        s = strides[a]
        for i in range(n - s):
            w = weights[a, i]
            if w == 0.0:
                continue
            acc = 0.0
            for c in range(m):
                d = u[i + s, c] - u[i, c]
                acc += d * d
                wd = 2.0 * w * d
                g[i, c] -= wd
                g[i + s, c] += wd
            energy += w * acc
    return energy, grad_arr


def wells(double[:, ::1] u, double[:] node_w):
    cdef Py_ssize_t n = u.shape[0], m = u.shape[1]
    cdef Py_ssize_t i, p
    cdef double r2, w, energy = 0.0, t
    grad_arr = np.zeros((n, m))
    cdef double[:, ::1] g = grad_arr
    for i in range(n):
        w = node_w[i]
        if w == 0.0:
            continue
        for p in range(0, m, 2):
            r2 = u[i, p] * u[i, p] + u[i, p + 1] * u[i, p + 1]
            t = r2 - 1.0
            energy += w * t * t
            g[i, p] = 4.0 * w * t * u[i, p]
            g[i, p + 1] = 4.0 * w * t * u[i, p + 1]
    return energy, grad_arr


def wrapped_sums(double[:, ::1] phase):
    cdef Py_ssize_t rows = phase.shape[0], cols = phase.shape[1]
    cdef Py_ssize_t r, k
    cdef double inc, tot, mx, two_pi = 2.0 * M_PI
    sums_arr = np.zeros(rows)
    max_arr = np.zeros(rows)
    cdef double[:] sums = sums_arr
    cdef double[:] mxs = max_arr
    for r in range(rows):
        tot = 0.0
        mx = 0.0
        for k in range(cols - 1):
            inc = phase[r, k + 1] - phase[r, k] + M_PI
            inc = inc - two_pi * floor(inc / two_pi) - M_PI
            tot += inc
            if fabs(inc) > mx:
                mx = fabs(inc)
        sums[r] = tot
        mxs[r] = mx
    return sums_arr, max_arr
