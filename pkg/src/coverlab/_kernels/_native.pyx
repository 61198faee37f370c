# cython: boundscheck=False, wraparound=False, cdivision=True
"""Cython implementations of the hot array kernels.

Contracts mirror `_fallback`; results are bit-identical, these are just
single-pass C loops without temporary arrays.
"""

import numpy as np

cimport numpy as cnp

BACKEND = "native"


def mark_intervals(lo, hi, Py_ssize_t n_cells, out=None):
    """Flag cells lo[i]..hi[i] (inclusive) in a uint8 mask of length n_cells."""
    if out is None:
        out = np.zeros(n_cells, dtype=np.uint8)
    cdef const cnp.int64_t[::1] lo_v = np.ascontiguousarray(lo, dtype=np.int64)
    cdef const cnp.int64_t[::1] hi_v = np.ascontiguousarray(hi, dtype=np.int64)
    cdef cnp.uint8_t[::1] out_v = out
    cdef Py_ssize_t i, j, n = lo_v.shape[0]
    cdef cnp.int64_t a, b
    with nogil:
        for i in range(n):
            a = lo_v[i]
            b = hi_v[i]
            if a > b:
                continue
            for j in range(a, b + 1):
                out_v[j] = 1
    return out


def runs_from_mask(mask):
    """Maximal runs of 1-cells: returns (starts, ends), ends inclusive."""
    cdef const cnp.uint8_t[::1] m = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t n = m.shape[0]
    cdef Py_ssize_t i, count = 0
    cdef cnp.uint8_t prev = 0
    with nogil:
        for i in range(n):
            if m[i] and not prev:
                count += 1
            prev = m[i]
    starts = np.empty(count, dtype=np.int64)
    ends = np.empty(count, dtype=np.int64)
    cdef cnp.int64_t[::1] s_v = starts
    cdef cnp.int64_t[::1] e_v = ends
    cdef Py_ssize_t k = 0
    prev = 0
    with nogil:
        for i in range(n):
            if m[i] and not prev:
                s_v[k] = i
            if prev and not m[i]:
                e_v[k] = i - 1
                k += 1
            prev = m[i]
        if prev:
            e_v[k] = n - 1
    return starts, ends


def window_counts(prefix, lo, hi):
    """Flagged-cell counts over windows lo[i]..hi[i] via a 0-prepended prefix sum."""
    cdef const cnp.int64_t[::1] p_v = np.ascontiguousarray(prefix, dtype=np.int64)
    cdef const cnp.int64_t[::1] lo_v = np.ascontiguousarray(lo, dtype=np.int64)
    cdef const cnp.int64_t[::1] hi_v = np.ascontiguousarray(hi, dtype=np.int64)
    cdef Py_ssize_t i, n = lo_v.shape[0]
    out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] out_v = out
    with nogil:
        for i in range(n):
            out_v[i] = p_v[hi_v[i] + 1] - p_v[lo_v[i]]
    return out
