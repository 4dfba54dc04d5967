"""Backend selection for the CSR kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback is used. Setting ``GRAPHCON_PURE_PYTHON=1`` forces the fallback.
Both backends take int64 CSR arrays and C-contiguous float64 data.
"""

import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("GRAPHCON_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        pass


def _f(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def csr_spmm(indptr, indices, weights, x):
    return _impl.csr_spmm(indptr, indices, _f(weights), _f(x))


def csr_spmm_t(indptr, indices, weights, g):
    return _impl.csr_spmm_t(indptr, indices, _f(weights), _f(g))


def edge_dot(indptr, indices, a, b):
    return _impl.edge_dot(indptr, indices, _f(a), _f(b))


def segment_softmax(indptr, scores):
    return _impl.segment_softmax(indptr, _f(scores))


def segment_softmax_backward(indptr, probs, g):
    return _impl.segment_softmax_backward(indptr, _f(probs), _f(g))


def pair_sqdist_sum(indptr, indices, weights, x):
    return float(_impl.pair_sqdist_sum(indptr, indices, _f(weights), _f(x)))


def backend_module(name):
    """Return the kernel module for ``name`` ("cython" or "python")."""
    if name == "python":
        return _pykernels
    from . import _ckernels

    return _ckernels
