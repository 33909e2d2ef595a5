# cython: language_level=3
"""Compiled hot loops: gradient histograms for boosting and nearest-record distances."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def build_histogram(const unsigned char[:, ::1] bins, const long long[::1] rows,
                    const double[::1] grad, const double[::1] hess, int n_bins):
    """Sum grad, hess and counts of ``rows`` per (feature, bin)."""
    cdef Py_ssize_t n_feat = bins.shape[1]
    cdef Py_ssize_t n_rows = rows.shape[0]
    out_arr = np.zeros((n_feat, n_bins, 3), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, f
    cdef long long r
    cdef unsigned char b
    cdef double g, h
    with nogil:
        for i in range(n_rows):
            r = rows[i]
            g = grad[r]
            h = hess[r]
            for f in range(n_feat):
                b = bins[r, f]
                out[f, b, 0] += g
                out[f, b, 1] += h
                out[f, b, 2] += 1.0
    return out_arr


def min_sq_distances(const double[:, ::1] query, const double[:, ::1] ref):
    """Squared L2 distance from each query row to its nearest reference row."""
    cdef Py_ssize_t m = query.shape[0]
    cdef Py_ssize_t n = ref.shape[0]
    cdef Py_ssize_t d = query.shape[1]
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double best, acc, diff
    with nogil:
        for i in range(m):
            best = INFINITY
            for j in range(n):
                acc = 0.0
                for k in range(d):
                    diff = query[i, k] - ref[j, k]
                    acc = acc + diff * diff
                    if acc >= best:
                        break
                if acc < best:
                    best = acc
            out[i] = best
    return out_arr
