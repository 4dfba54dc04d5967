"""Reverse-mode differentiation over dense float64 matrices.

A :class:`Tape` records every operation in append order; ``backward`` walks
the records once in reverse, accumulating cotangents. All values are 2-D
arrays and there is no broadcasting: shapes must match exactly.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .graph import Graph, NormalizedAdjacency


class ShapeError(ValueError):
    pass


class Var:
    __slots__ = ("tape", "index", "value")

    def __init__(self, tape: "Tape", index: int, value: np.ndarray):
        self.tape = tape
        self.index = index
        self.value = value

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def grad(self) -> np.ndarray:
        return self.tape.grad(self)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Var(#{self.index}, shape={self.shape})"


class Tape:
    """Append-only operation record.

    With ``grad_enabled=False`` nothing but values is kept, which makes long
    inference-only rollouts cheap.
    """

    def __init__(self, grad_enabled: bool = True):
        self.grad_enabled = grad_enabled
        self._parents: list[tuple[int, ...]] = []
        self._backward: list = []
        self._grads: list | None = None

    def __len__(self):
        return len(self._parents)

    def record(self, value, parents=(), backward=None) -> Var:
        """Append a node. ``backward(g)`` must return one cotangent per parent."""
        value = np.asarray(value, dtype=np.float64)
        if value.ndim != 2:
            raise ShapeError(f"values must be 2-D, got shape {value.shape}")
        for p in parents:
            if p.tape is not self:
                raise ValueError("operands belong to different tapes")
        idx = len(self._parents)
        if self.grad_enabled:
            self._parents.append(tuple(p.index for p in parents))
            self._backward.append(backward)
        else:
            self._parents.append(())
            self._backward.append(None)
        return Var(self, idx, value)

    def leaf(self, value) -> Var:
        value = np.array(value, dtype=np.float64)
        if value.ndim == 1:
            value = value[:, None]
        return self.record(value)

    def backward(self, loss: Var) -> None:
        if loss.tape is not self:
            raise ValueError("loss belongs to a different tape")
        if loss.shape != (1, 1):
            raise ShapeError(f"backward needs a 1x1 loss, got {loss.shape}")
        if not self.grad_enabled:
            raise RuntimeError("tape was created with grad_enabled=False")
        grads: list = [None] * len(self._parents)
        grads[loss.index] = np.ones((1, 1))
        for i in range(loss.index, -1, -1):
            g = grads[i]
            fn = self._backward[i]
            if g is None or fn is None:
                continue
            for p, gp in zip(self._parents[i], fn(g)):
                if gp is None:
                    continue
                grads[p] = gp if grads[p] is None else grads[p] + gp
        self._grads = grads

    def grad(self, var: Var) -> np.ndarray:
        """Cotangent of the last ``backward`` loss w.r.t. ``var`` (zeros if unreachable)."""
        if self._grads is None:
            raise RuntimeError("call backward() first")
        g = self._grads[var.index] if var.index < len(self._grads) else None
        return np.zeros(var.shape) if g is None else g


def _same_shape(a: Var, b: Var, op: str):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def constant(tape: Tape, value) -> Var:
    return tape.leaf(value)


def add(a: Var, b: Var) -> Var:
    _same_shape(a, b, "add")
    return a.tape.record(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a: Var, b: Var) -> Var:
    _same_shape(a, b, "sub")
    return a.tape.record(a.value - b.value, (a, b), lambda g: (g, -g))


def scale(a: Var, c: float) -> Var:
    c = float(c)
    return a.tape.record(c * a.value, (a,), lambda g: (c * g,))


def hadamard(a: Var, b: Var) -> Var:
    _same_shape(a, b, "hadamard")
    av, bv = a.value, b.value
    return a.tape.record(av * bv, (a, b), lambda g: (g * bv, g * av))


def matmul(a: Var, b: Var) -> Var:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    return a.tape.record(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def concat_cols(a: Var, b: Var) -> Var:
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_cols: row mismatch {a.shape} vs {b.shape}")
    k = a.shape[1]
    return a.tape.record(np.hstack([a.value, b.value]), (a, b), lambda g: (g[:, :k], g[:, k:]))


def slice_rows(a: Var, start: int, stop: int) -> Var:
    n = a.shape[0]
    if not 0 <= start <= stop <= n:
        raise ShapeError(f"slice_rows: [{start}:{stop}] out of range for {n} rows")

    def back(g):
        out = np.zeros(a.shape)
        out[start:stop] = g
        return (out,)

    return a.tape.record(a.value[start:stop], (a,), back)


def take_rows(a: Var, rows) -> Var:
    """Gather rows by index (duplicates allowed)."""
    rows = np.asarray(rows, dtype=np.int64)

    def back(g):
        out = np.zeros(a.shape)
        np.add.at(out, rows, g)
        return (out,)

    return a.tape.record(a.value[rows], (a,), back)


def total(a: Var) -> Var:
    """Sum of all entries as a 1x1 Var."""
    shape = a.shape
    return a.tape.record(np.array([[a.value.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),))


def spmm(adj: NormalizedAdjacency, x: Var) -> Var:
    if adj.num_nodes != x.shape[0]:
        raise ShapeError(f"spmm: adjacency has {adj.num_nodes} nodes, x has {x.shape[0]} rows")
    ip, ix, w = adj.indptr, adj.indices, adj.weights
    out = kernels.csr_spmm(ip, ix, w, x.value)
    return x.tape.record(out, (x,), lambda g: (kernels.csr_spmm_t(ip, ix, w, g),))


ACTIVATIONS = ("relu", "tanh", "identity")


def activation_value(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "identity":
        return z.copy()
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activation_derivative(z: np.ndarray, kind: str) -> np.ndarray:
    """Elementwise derivative; ReLU uses 0 at exactly 0."""
    if kind == "relu":
        return (z > 0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - np.tanh(z) ** 2
    if kind == "identity":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activation(x: Var, kind: str) -> Var:
    z = x.value
    out = activation_value(z, kind)
    d = activation_derivative(z, kind)
    return x.tape.record(out, (x,), lambda g: (g * d,))


def _attention_layout(g: Graph):
    indptr, indices = g.self_loop_csr
    rows = np.repeat(np.arange(g.num_nodes, dtype=np.int64), np.diff(indptr))
    return indptr, indices, rows


def edge_scores(xw: Var, att: Var, g: Graph, leaky_slope: float = 0.2) -> Var:
    """LeakyReLU(a^T [h_i || h_j]) for every pair of ``A + I``, target ``i`` first.

    Returns a ``(P, 1)`` Var in the self-loop CSR order of ``g``.
    """
    v, m = xw.shape
    if v != g.num_nodes:
        raise ShapeError(f"edge_scores: {v} rows for a graph with {g.num_nodes} nodes")
    if att.shape != (2 * m, 1):
        raise ShapeError(f"edge_scores: attention vector must be ({2 * m}, 1), got {att.shape}")
    _, cols, rows = _attention_layout(g)
    h = xw.value
    a_tgt, a_src = att.value[:m, 0], att.value[m:, 0]
    pre = (h @ a_tgt)[rows] + (h @ a_src)[cols]
    slope = float(leaky_slope)
    out = np.where(pre > 0, pre, slope * pre)
    dpre = np.where(pre > 0, 1.0, slope)

    def back(gr):
        ds = gr[:, 0] * dpre
        du = np.bincount(rows, weights=ds, minlength=v)
        dw = np.bincount(cols, weights=ds, minlength=v)
        dh = np.outer(du, a_tgt) + np.outer(dw, a_src)
        da = np.concatenate([h.T @ du, h.T @ dw])[:, None]
        return dh, da

    return xw.tape.record(out[:, None], (xw, att), back)


def neighbor_softmax(scores: Var, g: Graph) -> Var:
    """Softmax of pair scores over each node's neighbourhood (self included)."""
    indptr, _, _ = _attention_layout(g)
    if scores.shape != (int(indptr[-1]), 1):
        raise ShapeError(f"neighbor_softmax: expected ({int(indptr[-1])}, 1), got {scores.shape}")
    probs = kernels.segment_softmax(indptr, scores.value[:, 0])

    def back(gr):
        return (kernels.segment_softmax_backward(indptr, probs, gr[:, 0])[:, None],)

    return scores.tape.record(probs[:, None], (scores,), back)


def attn_aggregate(weights: Var, xw: Var, g: Graph) -> Var:
    """y_i = sum_j alpha_ij (XW)_j over the self-loop neighbourhood."""
    indptr, cols, _ = _attention_layout(g)
    if weights.shape != (cols.shape[0], 1):
        raise ShapeError(f"attn_aggregate: expected ({cols.shape[0]}, 1) weights, got {weights.shape}")
    if xw.shape[0] != g.num_nodes:
        raise ShapeError(f"attn_aggregate: {xw.shape[0]} rows for {g.num_nodes} nodes")
    alpha = weights.value[:, 0]
    h = xw.value
    out = kernels.csr_spmm(indptr, cols, alpha, h)

    def back(gr):
        dalpha = kernels.edge_dot(indptr, cols, gr, h)[:, None]
        dh = kernels.csr_spmm_t(indptr, cols, alpha, gr)
        return dalpha, dh

    return xw.tape.record(out, (weights, xw), back)
