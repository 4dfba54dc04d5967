"""Pure-numpy versions of the CSR kernels, used when the extension is absent."""

import numpy as np


def _rows(indptr):
    return np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))


def _segment_sum(indptr, vals):
    # reduceat misbehaves on empty segments, so they are masked out afterwards
    n = len(indptr) - 1
    out = np.zeros((n,) + vals.shape[1:], dtype=np.float64)
    if vals.shape[0] == 0:
        return out
    nonempty = indptr[1:] > indptr[:-1]
    starts = indptr[:-1][nonempty]
    out[nonempty] = np.add.reduceat(vals, starts, axis=0)
    return out


def csr_spmm(indptr, indices, weights, x):
    return _segment_sum(indptr, weights[:, None] * x[indices])


def csr_spmm_t(indptr, indices, weights, g):
    out = np.zeros_like(g, dtype=np.float64)
    np.add.at(out, indices, weights[:, None] * g[_rows(indptr)])
    return out


def edge_dot(indptr, indices, a, b):
    return np.einsum("pk,pk->p", a[_rows(indptr)], b[indices])


def segment_softmax(indptr, scores):
    rows = _rows(indptr)
    n = len(indptr) - 1
    mx = np.full(n, -np.inf)
    np.maximum.at(mx, rows, scores)
    e = np.exp(scores - mx[rows])
    return e / _segment_sum(indptr, e)[rows]


def segment_softmax_backward(indptr, probs, g):
    rows = _rows(indptr)
    dot = _segment_sum(indptr, probs * g)
    return probs * (g - dot[rows])


def pair_sqdist_sum(indptr, indices, weights, x):
    d = x[_rows(indptr)] - x[indices]
    return float(np.sum(weights * np.einsum("pk,pk->p", d, d)))
