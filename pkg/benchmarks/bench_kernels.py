"""Compare the compiled and numpy CSR kernels on random graphs.

    python3 benchmarks/bench_kernels.py [--nodes 20000] [--degree 8] [--width 32] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from graphcon.checks import random_graph
from graphcon.graph import AdjacencyKind, from_edge_list, normalized_adjacency
from graphcon.kernels import backend_module
from graphcon.rng import Rng


def cases(adj, x, scores):
    ip, ix, w = adj.indptr, adj.indices, adj.weights
    return {
        "csr_spmm": lambda m: m.csr_spmm(ip, ix, w, x),
        "csr_spmm_t": lambda m: m.csr_spmm_t(ip, ix, w, x),
        "edge_dot": lambda m: m.edge_dot(ip, ix, x, x),
        "segment_softmax": lambda m: m.segment_softmax(ip, scores),
        "pair_sqdist_sum": lambda m: m.pair_sqdist_sum(ip, ix, w, x),
    }


def main(argv=None):
    p = argparse.ArgumentParser()
    p.add_argument("--nodes", type=int, default=20000)
    p.add_argument("--degree", type=float, default=8.0)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args(argv)

    r = Rng(a.seed)
    v = a.nodes
    # sparse G(v, p) via sampled edge endpoints; random_graph is O(v^2)
    if v <= 3000:
        g = random_graph(v, a.degree / v, r)
    else:
        m = int(v * a.degree / 2)
        e = r.integers(v, size=(m, 2))
        e = e[e[:, 0] != e[:, 1]]
        e = np.unique(np.sort(e, axis=1), axis=0)
        g = from_edge_list(e, v)
    adj = normalized_adjacency(g, AdjacencyKind.SYM_GCN)
    x = r.normal(size=(v, a.width))
    scores = r.normal(size=adj.indices.size)

    mods = {"python": backend_module("python")}
    try:
        mods["cython"] = backend_module("cython")
    except ImportError:
        print("compiled extension not built; timing the numpy backend only")

    print(f"v={v} nnz={adj.indices.size} width={a.width}")
    print(f"{'kernel':<18}" + "".join(f"{k:>12}" for k in mods) + ("   speedup" if len(mods) == 2 else ""))
    for name, fn in cases(adj, x, scores).items():
        ref = fn(mods["python"])
        times = {}
        for k, m in mods.items():
            out = fn(m)
            np.testing.assert_allclose(out, ref, rtol=1e-10, atol=1e-12)
            times[k] = min(timeit.repeat(lambda: fn(m), number=1, repeat=a.repeat))
        line = f"{name:<18}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times.values())
        if len(times) == 2:
            line += f"{times['python'] / times['cython']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
