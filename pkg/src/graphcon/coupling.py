"""Learnable 1-neighbourhood couplings: graph convolution and graph attention."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import autodiff as ad
from .graph import AdjacencyKind, Graph, normalized_adjacency
from .rng import Rng


class CouplingKind(str, Enum):
    GCN = "gcn"
    GAT = "gat"


@dataclass(frozen=True)
class CouplingConfig:
    kind: CouplingKind = CouplingKind.GCN
    width: int = 1
    num_layers: int = 1
    share_weights: bool = False
    leaky_slope: float = 0.2
    adjacency: AdjacencyKind = AdjacencyKind.SYM_GCN

    def __post_init__(self):
        object.__setattr__(self, "kind", CouplingKind(self.kind))
        object.__setattr__(self, "adjacency", AdjacencyKind(self.adjacency))
        if self.width < 1:
            raise ValueError("coupling width must be >= 1")
        if self.num_layers < 0:
            raise ValueError("num_layers must be >= 0")

    @property
    def num_sets(self) -> int:
        return 1 if self.share_weights else self.num_layers


@dataclass
class CouplingParams:
    """One ``W`` (m x m) per parameter set, plus ``a`` (2m x 1) for attention."""

    config: CouplingConfig
    weights: list[np.ndarray]
    attention: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        cfg = self.config
        if len(self.weights) != cfg.num_sets:
            raise ValueError(f"expected {cfg.num_sets} weight matrices, got {len(self.weights)}")
        for w in self.weights:
            if w.shape != (cfg.width, cfg.width):
                raise ValueError(f"weight shape {w.shape} != ({cfg.width}, {cfg.width})")
        if cfg.kind is CouplingKind.GAT:
            if len(self.attention) != cfg.num_sets:
                raise ValueError(f"expected {cfg.num_sets} attention vectors")
            for a in self.attention:
                if a.shape != (2 * cfg.width, 1):
                    raise ValueError(f"attention shape {a.shape} != ({2 * cfg.width}, 1)")

    def arrays(self) -> dict[str, np.ndarray]:
        out = {f"W{k}": w for k, w in enumerate(self.weights)}
        out.update({f"a{k}": a for k, a in enumerate(self.attention)})
        return out

    @classmethod
    def from_arrays(cls, config: CouplingConfig, arrays: dict) -> "CouplingParams":
        weights = [np.asarray(arrays[f"W{k}"], dtype=np.float64) for k in range(config.num_sets)]
        att = []
        if config.kind is CouplingKind.GAT:
            att = [np.asarray(arrays[f"a{k}"], dtype=np.float64) for k in range(config.num_sets)]
        return cls(config, weights, att)

    def copy(self) -> "CouplingParams":
        return CouplingParams(self.config, [w.copy() for w in self.weights],
                              [a.copy() for a in self.attention])


def init_params(cfg: CouplingConfig, seed: int | Rng) -> CouplingParams:
    """Uniform in [-1/sqrt(m), 1/sqrt(m)] for W, [-1/sqrt(2m), 1/sqrt(2m)] for a."""
    r = seed if isinstance(seed, Rng) else Rng(seed)
    m = cfg.width
    s_w = 1.0 / np.sqrt(m)
    s_a = 1.0 / np.sqrt(2 * m)
    weights, att = [], []
    for _ in range(cfg.num_sets):
        weights.append(r.uniform(-s_w, s_w, size=(m, m)))
        if cfg.kind is CouplingKind.GAT:
            att.append(r.uniform(-s_a, s_a, size=(2 * m, 1)))
    return CouplingParams(cfg, weights, att)


class BoundCoupling:
    """Coupling parameters registered on a tape for one forward pass.

    Calling ``bound(X, layer)`` evaluates the coupling for layer ``layer``
    (0-based) and is differentiable w.r.t. ``X`` and the parameters.
    """

    def __init__(self, params: CouplingParams, tape: ad.Tape, g: Graph):
        self.params = params
        self.config = params.config
        self.graph = g
        self.weights = [tape.leaf(w) for w in params.weights]
        self.attention = [tape.leaf(a) for a in params.attention]
        self.adjacency = None
        if self.config.kind is CouplingKind.GCN:
            self.adjacency = normalized_adjacency(g, self.config.adjacency)

    def param_vars(self) -> dict[str, ad.Var]:
        out = {f"W{k}": w for k, w in enumerate(self.weights)}
        out.update({f"a{k}": a for k, a in enumerate(self.attention)})
        return out

    def _set(self, layer: int) -> int:
        if self.config.share_weights:
            return 0
        if not 0 <= layer < self.config.num_layers:
            raise IndexError(f"layer {layer} out of range for {self.config.num_layers} layers")
        return layer

    def __call__(self, x: ad.Var, layer: int) -> ad.Var:
        return apply(self, x, self.graph, layer)


def bind(params: CouplingParams, tape: ad.Tape, g: Graph) -> BoundCoupling:
    return BoundCoupling(params, tape, g)


def apply(bound: BoundCoupling, x: ad.Var, g: Graph, layer: int) -> ad.Var:
    if x.shape[0] != g.num_nodes:
        raise ad.ShapeError(f"coupling input has {x.shape[0]} rows, graph has {g.num_nodes} nodes")
    k = bound._set(layer)
    xw = ad.matmul(x, bound.weights[k])
    cfg = bound.config
    if cfg.kind is CouplingKind.GCN:
        adj = bound.adjacency if g is bound.graph else normalized_adjacency(g, cfg.adjacency)
        return ad.spmm(adj, xw)
    scores = ad.edge_scores(xw, bound.attention[k], g, cfg.leaky_slope)
    alpha = ad.neighbor_softmax(scores, g)
    return ad.attn_aggregate(alpha, xw, g)
