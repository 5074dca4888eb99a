# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Every routine must agree bit-for-bit with ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabsf

cnp.import_array()


def matmul(const float[:, ::1] a, const float[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1], p = b.shape[1]
    cdef Py_ssize_t i, j, k
    cdef float aik
    if b.shape[0] != m:
        raise ValueError(f"matmul shape mismatch: ({n}, {m}) x ({b.shape[0]}, {p})")
    out = np.zeros((n, p), dtype=np.float32)
    cdef float[:, ::1] c = out
    cdef float* crow
    cdef const float* brow
    # i-k-j order: each c[i, j] still accumulates over k in ascending order
    with nogil:
        for i in range(n):
            crow = &c[i, 0] if p > 0 else NULL
            for k in range(m):
                aik = a[i, k]
                brow = &b[k, 0]
                for j in range(p):
                    crow[j] = crow[j] + aik * brow[j]
    return out


def lif_step(const float[::1] u_prev, const float[::1] current, float decay,
             float threshold, float u_reset):
    """Flat fused membrane update; returns (u_next, spikes, u_pre)."""
    cdef Py_ssize_t n = u_prev.shape[0], i
    if current.shape[0] != n:
        raise ValueError("lif_step shape mismatch")
    u_next = np.empty(n, dtype=np.float32)
    spikes = np.empty(n, dtype=np.float32)
    u_pre = np.empty(n, dtype=np.float32)
    cdef float[::1] un = u_next, sp = spikes, up = u_pre
    cdef float u
    with nogil:
        for i in range(n):
            u = decay * u_prev[i]
            u = u + current[i]
            up[i] = u
            if u >= threshold:
                sp[i] = 1.0
                un[i] = u_reset
            else:
                sp[i] = 0.0
                un[i] = u
    return u_next, spikes, u_pre


def triangle_surrogate(const float[::1] u, float threshold, float width):
    cdef Py_ssize_t n = u.shape[0], i
    out = np.empty(n, dtype=np.float32)
    cdef float[::1] o = out
    cdef float v
    cdef float one = 1.0
    with nogil:
        for i in range(n):
            v = one - fabsf(u[i] - threshold) / width
            o[i] = v / width if v > 0.0 else 0.0
    return out


def count_ge(const double[::1] values, const double[::1] refs):
    """For each value, the number of refs it is greater than or equal to."""
    cdef Py_ssize_t n = values.shape[0], m = refs.shape[0], i, lo, hi, mid
    ordered_arr = np.sort(np.asarray(refs))
    cdef const double[::1] ordered = ordered_arr
    out = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] o = out
    cdef double v
    with nogil:
        for i in range(n):
            # upper bound: first position whose ref exceeds v
            v = values[i]
            lo = 0
            hi = m
            while lo < hi:
                mid = (lo + hi) >> 1
                if ordered[mid] <= v:
                    lo = mid + 1
                else:
                    hi = mid
            o[i] = lo
    return out
