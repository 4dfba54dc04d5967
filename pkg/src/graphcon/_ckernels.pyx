# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled CSR kernels. Signatures mirror :mod:`graphcon._pykernels`."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

ctypedef cnp.int64_t idx_t


def csr_spmm(const idx_t[::1] indptr, const idx_t[::1] indices,
             const double[::1] weights, const double[:, ::1] x):
    """out[i] = sum_p weights[p] * x[indices[p]] over row i."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t m = x.shape[1]
    out_arr = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, p, j, k
    cdef double w
    with nogil:
        for i in range(n):
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                w = weights[p]
                for k in range(m):
                    out[i, k] += w * x[j, k]
    return out_arr


def csr_spmm_t(const idx_t[::1] indptr, const idx_t[::1] indices,
               const double[::1] weights, const double[:, ::1] g):
    """Transpose product: out[indices[p]] += weights[p] * g[row(p)]."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t m = g.shape[1]
    out_arr = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, p, j, k
    cdef double w
    with nogil:
        for i in range(n):
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                w = weights[p]
                for k in range(m):
                    out[j, k] += w * g[i, k]
    return out_arr


def edge_dot(const idx_t[::1] indptr, const idx_t[::1] indices,
             const double[:, ::1] a, const double[:, ::1] b):
    """Per stored pair p=(i, j): a[i] . b[j]."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t m = a.shape[1]
    out_arr = np.zeros(indices.shape[0], dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, p, j, k
    cdef double s
    with nogil:
        for i in range(n):
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                s = 0.0
                for k in range(m):
                    s = s + a[i, k] * b[j, k]
                out[p] = s
    return out_arr


def segment_softmax(const idx_t[::1] indptr, const double[::1] scores):
    """Softmax of ``scores`` within each CSR row, max-shifted."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    out_arr = np.empty(scores.shape[0], dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, p
    cdef double mx, total
    with nogil:
        for i in range(n):
            if indptr[i + 1] == indptr[i]:
                continue
            mx = scores[indptr[i]]
            for p in range(indptr[i] + 1, indptr[i + 1]):
                if scores[p] > mx:
                    mx = scores[p]
            total = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                out[p] = exp(scores[p] - mx)
                total = total + out[p]
            for p in range(indptr[i], indptr[i + 1]):
                out[p] = out[p] / total
    return out_arr


def segment_softmax_backward(const idx_t[::1] indptr, const double[::1] probs,
                             const double[::1] g):
    """Cotangent of scores given probs and their cotangent ``g``."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    out_arr = np.empty(probs.shape[0], dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, p
    cdef double dot
    with nogil:
        for i in range(n):
            dot = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                dot = dot + probs[p] * g[p]
            for p in range(indptr[i], indptr[i + 1]):
                out[p] = probs[p] * (g[p] - dot)
    return out_arr


def pair_sqdist_sum(const idx_t[::1] indptr, const idx_t[::1] indices,
                    const double[::1] weights, const double[:, ::1] x):
    """sum_p weights[p] * ||x[row(p)] - x[indices[p]]||^2."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t m = x.shape[1]
    cdef Py_ssize_t i, p, j, k
    cdef double total = 0.0, s, d
    with nogil:
        for i in range(n):
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                s = 0.0
                for k in range(m):
                    d = x[i, k] - x[j, k]
                    s = s + d * d
                total = total + weights[p] * s
    return total
