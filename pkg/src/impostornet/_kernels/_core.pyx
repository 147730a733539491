# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled distance/voting kernels.

Single-threaded, fused loops: each function makes one pass over the point
matrix and accumulates in float64, so no B x M x d temporaries are
materialized. Semantics match py_backend exactly (up to summation order).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


def sqdist(double[:, ::1] a, double[:, ::1] b):
    """All-pairs squared Euclidean distances, shape (B, M)."""
    cdef Py_ssize_t nb = a.shape[0], nm = b.shape[0], d = a.shape[1]
    cdef Py_ssize_t i, j, t
    cdef double acc, diff
    out_arr = np.empty((nb, nm), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    # points outer so each b-row stays hot while all queries consume it
    for j in range(nm):
        for i in range(nb):
            acc = 0.0
            for t in range(d):
                diff = a[i, t] - b[j, t]
                acc += diff * diff
            out[i, j] = acc
    return out_arr


def rbf_probs(double[:, ::1] queries, double[:, ::1] points,
              cnp.int64_t[::1] labels, int n_classes, double inv_two_sigma2,
              cnp.int64_t[::1] exclude):
    """Class distributions of Gaussian-weighted votes, shape (B, n_classes)."""
    cdef Py_ssize_t nb = queries.shape[0], nm = points.shape[0]
    cdef Py_ssize_t d = queries.shape[1]
    cdef Py_ssize_t i, j, t
    cdef double acc, diff, dmin, w, total
    d2_arr = np.empty((nb, nm), dtype=np.float64)
    cdef double[:, ::1] d2 = d2_arr
    out_arr = np.zeros((nb, n_classes), dtype=np.float64)
    cdef double[:, ::1] out = out_arr

    for j in range(nm):
        for i in range(nb):
            acc = 0.0
            for t in range(d):
                diff = queries[i, t] - points[j, t]
                acc += diff * diff
            d2[i, j] = acc

    for i in range(nb):
        dmin = -1.0
        for j in range(nm):
            if j == exclude[i]:
                continue
            if dmin < 0.0 or d2[i, j] < dmin:
                dmin = d2[i, j]
        total = 0.0
        for j in range(nm):
            if j == exclude[i]:
                continue
            w = exp((dmin - d2[i, j]) * inv_two_sigma2)
            out[i, labels[j]] += w
            total += w
        for t in range(n_classes):
            out[i, t] /= total
    return out_arr


def adc_tables(double[:, ::1] queries, double[:, :, ::1] centroids):
    """Per-subspace squared distances to every centroid, shape (B, m, k)."""
    cdef Py_ssize_t nb = queries.shape[0]
    cdef Py_ssize_t n_sub = centroids.shape[0], k = centroids.shape[1]
    cdef Py_ssize_t sub_dim = centroids.shape[2]
    cdef Py_ssize_t i, s, c, t
    cdef double acc, diff
    out_arr = np.empty((nb, n_sub, k), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    for i in range(nb):
        for s in range(n_sub):
            for c in range(k):
                acc = 0.0
                for t in range(sub_dim):
                    diff = queries[i, s * sub_dim + t] - centroids[s, c, t]
                    acc += diff * diff
                out[i, s, c] = acc
    return out_arr


def adc_sqdist(double[:, :, ::1] tables, cnp.int64_t[:, ::1] codes):
    """Squared distances to coded points via table lookups, shape (B, M)."""
    cdef Py_ssize_t nb = tables.shape[0], n_sub = tables.shape[1]
    cdef Py_ssize_t nm = codes.shape[0]
    cdef Py_ssize_t i, j, s
    cdef double acc
    out_arr = np.empty((nb, nm), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(nb):
        for j in range(nm):
            acc = 0.0
            for s in range(n_sub):
                acc += tables[i, s, codes[j, s]]
            out[i, j] = acc
    return out_arr


def adc_probs(double[:, :, ::1] tables, cnp.int64_t[:, ::1] codes,
              cnp.int64_t[::1] labels, int n_classes, double inv_two_sigma2):
    """Voting rule evaluated against coded points, shape (B, n_classes)."""
    cdef Py_ssize_t nb = tables.shape[0], n_sub = tables.shape[1]
    cdef Py_ssize_t nm = codes.shape[0]
    cdef Py_ssize_t i, j, s, t
    cdef double acc, dmin, w, total
    d2_arr = np.empty((nb, nm), dtype=np.float64)
    cdef double[:, ::1] d2 = d2_arr
    out_arr = np.zeros((nb, n_classes), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(nb):
        for j in range(nm):
            acc = 0.0
            for s in range(n_sub):
                acc += tables[i, s, codes[j, s]]
            d2[i, j] = acc
    for i in range(nb):
        dmin = d2[i, 0]
        for j in range(1, nm):
            if d2[i, j] < dmin:
                dmin = d2[i, j]
        total = 0.0
        for j in range(nm):
            w = exp((dmin - d2[i, j]) * inv_two_sigma2)
            out[i, labels[j]] += w
            total += w
        for t in range(n_classes):
            out[i, t] /= total
    return out_arr
