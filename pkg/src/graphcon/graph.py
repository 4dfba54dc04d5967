"""Undirected graphs in CSR form, GCN-style normalization and Dirichlet energy."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np

from . import kernels


class GraphError(ValueError):
    pass


class SelfLoopError(GraphError):
    """Raised when an input edge list contains ``(i, i)``."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected graph, each edge stored in both directions.

    ``row_offsets``/``col_indices`` are the CSR arrays (int64); columns are
    sorted within each row. There are never self-loops here: they are only
    introduced by :func:`normalized_adjacency`.
    """

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray

    def __post_init__(self):
        for arr in (self.row_offsets, self.col_indices):
            arr.setflags(write=False)

    @property
    def num_directed(self) -> int:
        return int(self.col_indices.shape[0])

    @property
    def num_edges(self) -> int:
        return self.num_directed // 2

    def neighbors(self, i: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[i]:self.row_offsets[i + 1]]

    @cached_property
    def row_ids(self) -> np.ndarray:
        """Source row of every stored directed pair."""
        return np.repeat(np.arange(self.num_nodes, dtype=np.int64), np.diff(self.row_offsets))

    def edge_list(self) -> list[tuple[int, int]]:
        """Undirected edges as ``(i, j)`` with ``i < j``, sorted."""
        mask = self.row_ids < self.col_indices
        return list(zip(self.row_ids[mask].tolist(), self.col_indices[mask].tolist()))

    @cached_property
    def self_loop_csr(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR layout of ``A + I`` with sorted columns."""
        rows = np.concatenate([self.row_ids, np.arange(self.num_nodes, dtype=np.int64)])
        cols = np.concatenate([self.col_indices, np.arange(self.num_nodes, dtype=np.int64)])
        order = np.lexsort((cols, rows))
        indptr = np.zeros(self.num_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=self.num_nodes), out=indptr[1:])
        return indptr, cols[order]

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.num_nodes, self.num_nodes))
        a[self.row_ids, self.col_indices] = 1.0
        return a

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
        )

    def __hash__(self):
        return hash((self.num_nodes, self.row_offsets.tobytes(), self.col_indices.tobytes()))

    def __repr__(self):
        return f"Graph(num_nodes={self.num_nodes}, num_edges={self.num_edges})"


def from_edge_list(pairs, num_nodes: int) -> Graph:
    """Build a symmetric, deduplicated CSR graph from undirected pairs."""
    if num_nodes < 0:
        raise GraphError("num_nodes must be non-negative")
    arr = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
    if arr.size:
        if arr.min() < 0 or arr.max() >= num_nodes:
            bad = arr[(arr < 0).any(axis=1) | (arr >= num_nodes).any(axis=1)][0]
            raise GraphError(f"edge {tuple(bad.tolist())} out of range for {num_nodes} nodes")
        loops = arr[:, 0] == arr[:, 1]
        if loops.any():
            i = int(arr[loops][0, 0])
            raise SelfLoopError(f"self-loop ({i}, {i}) not allowed in the edge list")
    both = np.concatenate([arr, arr[:, ::-1]])
    both = np.unique(both, axis=0)  # lexicographic, so rows then sorted columns
    indptr = np.zeros(num_nodes + 1, dtype=np.int64)
    if both.size:
        np.cumsum(np.bincount(both[:, 0], minlength=num_nodes), out=indptr[1:])
    cols = np.ascontiguousarray(both[:, 1], dtype=np.int64)
    return Graph(num_nodes, indptr, cols)


def grid_graph(width: int, height: int) -> Graph:
    """4-neighbour lattice; node id is ``row * width + col``."""
    if width < 1 or height < 1:
        raise GraphError(f"grid dimensions must be >= 1, got {width}x{height}")
    pairs = []
    for r in range(height):
        for c in range(width):
            i = r * width + c
            if c + 1 < width:
                pairs.append((i, i + 1))
            if r + 1 < height:
                pairs.append((i, i + width))
    return from_edge_list(pairs, width * height)


def ring_graph(n: int) -> Graph:
    """Cycle on ``n >= 3`` nodes (every node has degree 2)."""
    if n < 3:
        raise GraphError("a ring needs at least 3 nodes")
    return from_edge_list([(i, (i + 1) % n) for i in range(n)], n)


def path_graph(n: int) -> Graph:
    return from_edge_list([(i, i + 1) for i in range(n - 1)], n)


def degrees(g: Graph, with_self_loops: bool = False) -> np.ndarray:
    d = np.diff(g.row_offsets)
    return d + 1 if with_self_loops else d


class AdjacencyKind(str, Enum):
    SYM_GCN = "sym_gcn"
    ROW_STOCHASTIC = "row_stochastic"


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    """Weights of ``A + I`` after normalization, in the self-loop CSR layout."""

    kind: AdjacencyKind
    num_nodes: int
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray

    @cached_property
    def row_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_nodes, dtype=np.int64), np.diff(self.indptr))

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.num_nodes, self.num_nodes))
        a[self.row_ids, self.indices] = self.weights
        return a

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.row_ids, weights=self.weights, minlength=self.num_nodes)

    @cached_property
    def transpose_positions(self) -> np.ndarray:
        """Position of pair (j, i) for every stored pair (i, j)."""
        # the pattern is symmetric and sorted by (row, col), so ranking pairs by
        # (col, row) enumerates the transposed positions in order
        perm = np.lexsort((self.row_ids, self.indices))
        pos = np.empty_like(perm)
        pos[perm] = np.arange(perm.shape[0])
        return pos

    def transpose_weights(self) -> np.ndarray:
        """Weight of (j, i) at the position of (i, j)."""
        return self.weights[self.transpose_positions]


def normalized_adjacency(g: Graph, kind=AdjacencyKind.SYM_GCN) -> NormalizedAdjacency:
    kind = AdjacencyKind(kind)
    indptr, indices = g.self_loop_csr
    dhat = degrees(g, with_self_loops=True).astype(np.float64)
    rows = np.repeat(np.arange(g.num_nodes), np.diff(indptr))
    if kind is AdjacencyKind.SYM_GCN:
        w = 1.0 / np.sqrt(dhat[rows] * dhat[indices])
    else:
        w = 1.0 / dhat[rows]
    return NormalizedAdjacency(kind, g.num_nodes, indptr, indices, w)


def dirichlet_energy(g: Graph, x) -> float:
    """(1/v) * sum_i sum_{j in N(i)} ||x_i - x_j||^2 (each edge counted twice)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != g.num_nodes:
        raise GraphError(f"feature matrix has {x.shape[0]} rows, graph has {g.num_nodes} nodes")
    if g.num_nodes == 0:
        return 0.0
    ones = np.ones(g.num_directed)
    return kernels.pair_sqdist_sum(g.row_offsets, g.col_indices, ones, x) / g.num_nodes


def read_edge_list(path, num_nodes: int | None = None) -> Graph:
    """Read a ``src<TAB>dst`` file with 0-based ids; '#' lines are comments."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if s.startswith("# nodes:") and num_nodes is None:
                num_nodes = int(s.split(":", 1)[1])
                continue
            if not s or s.startswith("#"):
                continue
            parts = s.split("\t")
            if len(parts) != 2:
                raise GraphError(f"{path}:{lineno}: expected 'src<TAB>dst', got {s!r}")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise GraphError(f"{path}:{lineno}: non-integer node id in {s!r}") from None
    if num_nodes is None:
        num_nodes = 1 + max((max(p) for p in pairs), default=-1)
    return from_edge_list(pairs, num_nodes)


def write_edge_list(g: Graph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# nodes: {g.num_nodes}\n")
        for i, j in g.edge_list():
            fh.write(f"{i}\t{j}\n")
