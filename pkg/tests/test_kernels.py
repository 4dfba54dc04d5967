import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphcon import kernels
from graphcon.checks import random_graph
from graphcon.graph import normalized_adjacency
from graphcon.rng import Rng

BACKENDS = ["python"]
try:
    kernels.backend_module("cython")
    BACKENDS.append("cython")
except ImportError:  # extension not built
    pass


def _case(seed, v=12, m=3):
    r = Rng(seed)
    g = random_graph(v, 0.3, r)
    adj = normalized_adjacency(g)
    x = r.normal(size=(v, m))
    return adj, x, r


def test_compiled_backend_is_selected_when_built():
    if "cython" in BACKENDS and os.environ.get("GRAPHCON_PURE_PYTHON", "") not in ("1", "true", "yes"):
        assert kernels.BACKEND == "cython"
    else:
        assert kernels.BACKEND == "python"


@pytest.mark.parametrize("name", BACKENDS)
def test_spmm_matches_dense(name):
    mod = kernels.backend_module(name)
    adj, x, _ = _case(0)
    a = adj.to_dense()
    np.testing.assert_allclose(mod.csr_spmm(adj.indptr, adj.indices, adj.weights, x), a @ x,
                               atol=1e-12)
    np.testing.assert_allclose(mod.csr_spmm_t(adj.indptr, adj.indices, adj.weights, x), a.T @ x,
                               atol=1e-12)


@pytest.mark.parametrize("name", BACKENDS)
def test_edge_reductions_match_loops(name):
    mod = kernels.backend_module(name)
    adj, x, r = _case(1)
    b = r.normal(size=x.shape)
    rows = adj.row_ids
    want = np.array([x[i] @ b[j] for i, j in zip(rows, adj.indices)])
    np.testing.assert_allclose(mod.edge_dot(adj.indptr, adj.indices, x, b), want, atol=1e-12)
    want = sum(w * np.sum((x[i] - x[j]) ** 2) for i, j, w in zip(rows, adj.indices, adj.weights))
    assert mod.pair_sqdist_sum(adj.indptr, adj.indices, adj.weights, x) == pytest.approx(want, abs=1e-12)


@pytest.mark.parametrize("name", BACKENDS)
def test_segment_softmax_and_backward(name):
    mod = kernels.backend_module(name)
    adj, _, r = _case(2)
    s = r.normal(size=adj.indices.size) * 5
    p = mod.segment_softmax(adj.indptr, s)
    g = r.normal(size=s.size)
    gb = mod.segment_softmax_backward(adj.indptr, p, g)
    for i in range(adj.num_nodes):
        lo, hi = adj.indptr[i], adj.indptr[i + 1]
        e = np.exp(s[lo:hi] - s[lo:hi].max())
        q = e / e.sum()
        np.testing.assert_allclose(p[lo:hi], q, atol=1e-14)
        jac = np.diag(q) - np.outer(q, q)
        np.testing.assert_allclose(gb[lo:hi], jac.T @ g[lo:hi], atol=1e-13)


def test_empty_rows_are_zero():
    # nodes with no stored pairs
    indptr = np.array([0, 0, 1, 1], dtype=np.int64)
    indices = np.array([0], dtype=np.int64)
    for name in BACKENDS:
        out = kernels.backend_module(name).csr_spmm(indptr, indices, np.array([2.0]), np.ones((3, 2)))
        np.testing.assert_array_equal(out, [[0, 0], [2, 2], [0, 0]])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), v=st.integers(1, 15), m=st.integers(1, 4))
def test_backends_agree(seed, v, m):
    if len(BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    py, cy = (kernels.backend_module(n) for n in ("python", "cython"))
    r = Rng(seed)
    adj = normalized_adjacency(random_graph(v, 0.4, r))
    x = r.normal(size=(v, m))
    ip, ix, w = adj.indptr, adj.indices, adj.weights
    np.testing.assert_allclose(cy.csr_spmm(ip, ix, w, x), py.csr_spmm(ip, ix, w, x), atol=1e-13)
    np.testing.assert_allclose(cy.csr_spmm_t(ip, ix, w, x), py.csr_spmm_t(ip, ix, w, x), atol=1e-13)
    np.testing.assert_allclose(cy.edge_dot(ip, ix, x, x), py.edge_dot(ip, ix, x, x), atol=1e-13)
    s = r.normal(size=ix.size)
    p1, p2 = cy.segment_softmax(ip, s), py.segment_softmax(ip, s)
    np.testing.assert_allclose(p1, p2, atol=1e-14)
    np.testing.assert_allclose(cy.segment_softmax_backward(ip, p1, s), py.segment_softmax_backward(ip, p2, s),
                               atol=1e-13)
    assert cy.pair_sqdist_sum(ip, ix, w, x) == pytest.approx(py.pair_sqdist_sum(ip, ix, w, x), abs=1e-12)


def test_environment_forces_numpy_fallback():
    env = dict(os.environ, GRAPHCON_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from graphcon import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
