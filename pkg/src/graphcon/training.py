"""Encoder -> GraphCON (or stacked baseline) -> readout models and their training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import autodiff as ad
from .coupling import CouplingConfig, CouplingParams, bind, init_params
from .dynamics import (IntegratorConfig, NonFiniteError, baseline_forward, graphcon_forward,
                       state_cotangents)
from .graph import Graph
from .rng import Rng

log = logging.getLogger(__name__)


class Task(str, Enum):
    CLASSIFICATION = "classification"
    REGRESSION = "regression"


class Architecture(str, Enum):
    GRAPHCON = "graphcon"
    BASELINE = "baseline"


class TrainingDivergedError(FloatingPointError):
    def __init__(self, epoch: int):
        super().__init__(f"loss became non-finite at epoch {epoch}")
        self.epoch = epoch


# --- losses -----------------------------------------------------------------


def _mask_index(mask, v):
    if mask is None:
        return np.arange(v)
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64)
    if idx.size == 0:
        raise ValueError("loss mask selects no nodes")
    return idx


def mse_loss(pred: ad.Var, target, mask=None) -> ad.Var:
    """``1/(2v) * sum (pred - target)^2``; with a mask, ``v`` becomes the mask size."""
    target = np.asarray(target, dtype=np.float64).reshape(pred.shape)
    idx = _mask_index(mask, pred.shape[0])
    diff = np.zeros(pred.shape)
    diff[idx] = pred.value[idx] - target[idx]
    n = idx.size
    value = np.array([[0.5 * np.sum(diff * diff) / n]])
    return pred.tape.record(value, (pred,), lambda g: (g[0, 0] * diff / n,))


def cross_entropy_loss(logits: ad.Var, labels, mask=None) -> ad.Var:
    """Mean negative log-softmax of the true class over the masked nodes."""
    labels = np.asarray(labels, dtype=np.int64)
    v, c = logits.shape
    if labels.shape != (v,):
        raise ad.ShapeError(f"labels shape {labels.shape} != ({v},)")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"labels must lie in [0, {c})")
    idx = _mask_index(mask, v)
    z = logits.value[idx]
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = idx.size
    value = np.array([[-logp[np.arange(n), labels[idx]].sum() / n]])

    def back(g):
        p = np.exp(logp)
        p[np.arange(n), labels[idx]] -= 1.0
        out = np.zeros((v, c))
        out[idx] = p * (g[0, 0] / n)
        return (out,)

    return logits.tape.record(value, (logits,), back)


# --- optimizers ----------------------------------------------------------------


class SGDMomentum:
    """``buf = momentum * buf + grad; p -= lr * buf``."""

    def __init__(self, lr: float, momentum: float = 0.9):
        self.lr, self.momentum = lr, momentum
        self._buf: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict) -> None:
        for k, p in params.items():
            b = self._buf.get(k)
            b = grads[k].copy() if b is None else self.momentum * b + grads[k]
            self._buf[k] = b
            p -= self.lr * b


class Adam:
    """Adam with bias correction and no weight decay."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for k, p in params.items():
            g = grads[k]
            m = b1 * self._m.get(k, np.zeros_like(g)) + (1 - b1) * g
            v = b2 * self._v.get(k, np.zeros_like(g)) + (1 - b2) * g * g
            self._m[k], self._v[k] = m, v
            mhat = m / (1 - b1**self.t)
            vhat = v / (1 - b2**self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


# --- model -----------------------------------------------------------------------


@dataclass(frozen=True)
class ModelConfig:
    raw_width: int
    hidden_width: int
    out_width: int
    coupling: CouplingConfig
    integrator: IntegratorConfig
    task: Task = Task.CLASSIFICATION
    architecture: Architecture = Architecture.GRAPHCON

    def __post_init__(self):
        object.__setattr__(self, "task", Task(self.task))
        object.__setattr__(self, "architecture", Architecture(self.architecture))
        if self.coupling.width != self.hidden_width:
            raise ValueError("coupling width must equal hidden_width")
        if self.coupling.num_layers != self.integrator.n_layers:
            raise ValueError("coupling num_layers must equal integrator n_layers")
        if self.task is Task.CLASSIFICATION and self.out_width < 2:
            raise ValueError("classification needs at least 2 classes")


@dataclass
class Model:
    config: ModelConfig
    encoder: np.ndarray
    readout: np.ndarray
    coupling: CouplingParams

    def arrays(self) -> dict[str, np.ndarray]:
        """Named views of every trainable array (mutating them updates the model)."""
        out = {"encoder": self.encoder, "readout": self.readout}
        out.update({f"coupling.{k}": a for k, a in self.coupling.arrays().items()})
        return out

    def copy(self) -> "Model":
        return Model(self.config, self.encoder.copy(), self.readout.copy(), self.coupling.copy())

    @classmethod
    def from_arrays(cls, config: ModelConfig, arrays: dict) -> "Model":
        coupling = CouplingParams.from_arrays(
            config.coupling,
            {k.split(".", 1)[1]: a for k, a in arrays.items() if k.startswith("coupling.")},
        )
        return cls(config, np.array(arrays["encoder"], dtype=np.float64),
                   np.array(arrays["readout"], dtype=np.float64), coupling)


def init_model(cfg: ModelConfig, seed: int) -> Model:
    r = Rng(seed)
    s_in = 1.0 / np.sqrt(cfg.raw_width)
    s_out = 1.0 / np.sqrt(cfg.hidden_width)
    enc = r.uniform(-s_in, s_in, size=(cfg.raw_width, cfg.hidden_width))
    out = r.uniform(-s_out, s_out, size=(cfg.hidden_width, cfg.out_width))
    return Model(cfg, enc, out, init_params(cfg.coupling, r.spawn("coupling")))


@dataclass
class ForwardResult:
    pred: ad.Var
    trajectory: object
    param_vars: dict
    tape: ad.Tape


def forward_model(model: Model, x_raw, g: Graph, tape: ad.Tape | None = None) -> ForwardResult:
    cfg = model.config
    tape = tape if tape is not None else ad.Tape()
    x_raw = np.asarray(x_raw, dtype=np.float64)
    if x_raw.shape != (g.num_nodes, cfg.raw_width):
        raise ad.ShapeError(f"features {x_raw.shape} != ({g.num_nodes}, {cfg.raw_width})")
    enc = tape.leaf(model.encoder)
    rd = tape.leaf(model.readout)
    bound = bind(model.coupling, tape, g)
    x0 = ad.matmul(tape.leaf(x_raw), enc)
    if cfg.architecture is Architecture.GRAPHCON:
        traj = graphcon_forward(x0, None, bound, g, cfg.integrator)
    else:
        traj = baseline_forward(x0, bound, g, cfg.integrator)
    pred = ad.matmul(traj.x_vars[-1], rd)
    params = {"encoder": enc, "readout": rd}
    params.update({f"coupling.{k}": v for k, v in bound.param_vars().items()})
    return ForwardResult(pred, traj, params, tape)


def model_loss(model: Model, pred: ad.Var, data, mask) -> ad.Var:
    if model.config.task is Task.CLASSIFICATION:
        return cross_entropy_loss(pred, data.labels, mask)
    return mse_loss(pred, data.targets, mask)


def metric(model: Model, pred: np.ndarray, data, idx) -> float:
    """Accuracy for classification, mean absolute error for regression."""
    idx = _mask_index(idx, pred.shape[0])
    if model.config.task is Task.CLASSIFICATION:
        return float(np.mean(np.argmax(pred[idx], axis=1) == data.labels[idx]))
    t = np.asarray(data.targets, dtype=np.float64).reshape(pred.shape)
    return float(np.mean(np.abs(pred[idx] - t[idx])))


def grad_norm_profile(model: Model, data, mask=None) -> np.ndarray:
    """``max |dJ/dZ^l|`` for l = 1..N, with ``Z^l`` the layer-l state.

    For GraphCON ``Z^l = (X^l, Y^l)`` taken as independent coordinates, so the
    velocity cotangent excludes its path through ``X^l = X^{l-1} + dt Y^l``.
    """
    res = forward_model(model, data.features, data.graph)
    loss = model_loss(model, res.pred, data, mask)
    res.tape.backward(loss)
    cots = state_cotangents(res.trajectory, res.tape)[1:]
    out = [float(np.max(np.abs(c))) if c.size else 0.0 for c in cots]
    return np.asarray(out)


# --- training loop ------------------------------------------------------------------


class OptimizerKind(str, Enum):
    SGD_MOMENTUM = "sgd_momentum"
    ADAM = "adam"


@dataclass(frozen=True)
class TrainConfig:
    optimizer: OptimizerKind = OptimizerKind.ADAM
    lr: float = 0.01
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 100
    seed: int = 0
    patience: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "optimizer", OptimizerKind(self.optimizer))
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    def make_optimizer(self):
        if self.optimizer is OptimizerKind.ADAM:
            return Adam(self.lr, self.beta1, self.beta2, self.eps)
        return SGDMomentum(self.lr, self.momentum)


@dataclass(frozen=True)
class SplitSpec:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "val", "test"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        sets = [set(self.train.tolist()), set(self.val.tolist()), set(self.test.tolist())]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise ValueError("train/val/test splits must be disjoint")

    def validate(self, num_nodes: int) -> None:
        for name in ("train", "val", "test"):
            a = getattr(self, name)
            if a.size and (a.min() < 0 or a.max() >= num_nodes):
                raise ValueError(f"{name} split has node ids outside [0, {num_nodes})")


def random_split(num_nodes: int, fractions=(0.6, 0.2, 0.2), seed: int = 0) -> SplitSpec:
    perm = Rng(seed).permutation(num_nodes)
    a = int(round(fractions[0] * num_nodes))
    b = a + int(round(fractions[1] * num_nodes))
    return SplitSpec(np.sort(perm[:a]), np.sort(perm[a:b]), np.sort(perm[b:]))


@dataclass
class TrainResult:
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    model: Model | None = None

    def final(self, key: str) -> float:
        return self.history[self.best_epoch - 1][key] if self.history else float("nan")


def evaluate(model: Model, data, splits: SplitSpec) -> dict:
    res = forward_model(model, data.features, data.graph, ad.Tape(grad_enabled=False))
    pred = res.pred
    out = {}
    for name in ("train", "val", "test"):
        idx = getattr(splits, name)
        if idx.size == 0:
            out[f"{name}_loss"] = float("nan")
            out[f"{name}_metric"] = float("nan")
            continue
        out[f"{name}_loss"] = float(model_loss(model, pred, data, idx).value[0, 0])
        out[f"{name}_metric"] = metric(model, pred.value, data, idx)
    return out


def train(model: Model, data, splits: SplitSpec, cfg: TrainConfig) -> TrainResult:
    """Full-batch training; keeps and restores the best-validation parameters.

    ``data`` needs ``graph``, ``features`` and ``labels`` (classification) or
    ``targets`` (regression). Deterministic for fixed inputs.
    """
    splits.validate(data.graph.num_nodes)
    model = model.copy()
    opt = cfg.make_optimizer()
    higher_better = model.config.task is Task.CLASSIFICATION
    best_val, best_model, best_epoch, since_best = None, model.copy(), 0, 0
    result = TrainResult()
    for epoch in range(1, cfg.epochs + 1):
        try:
            res = forward_model(model, data.features, data.graph)
            loss = model_loss(model, res.pred, data, splits.train)
            train_loss = float(loss.value[0, 0])
            if not np.isfinite(train_loss):
                raise TrainingDivergedError(epoch)
            res.tape.backward(loss)
            grads = {k: res.tape.grad(v) for k, v in res.param_vars.items()}
            opt.step(model.arrays(), grads)
            ev = evaluate(model, data, splits)
        except NonFiniteError as e:
            raise TrainingDivergedError(epoch) from e
        if not np.isfinite(ev["train_loss"]):
            raise TrainingDivergedError(epoch)
        row = {"epoch": epoch, "train_loss": train_loss, "val_loss": ev["val_loss"],
               "val_metric": ev["val_metric"], "test_metric": ev["test_metric"]}
        result.history.append(row)
        vm = ev["val_metric"]
        improved = best_val is None or (vm > best_val if higher_better else vm < best_val)
        if improved:
            best_val, best_model, best_epoch, since_best = vm, model.copy(), epoch, 0
        else:
            since_best += 1
        log.debug("epoch %d loss %.6g val %.4f", epoch, train_loss, vm)
        if cfg.patience is not None and since_best >= cfg.patience:
            break
    result.best_epoch = best_epoch
    result.model = best_model
    return result


def with_depth(cfg: ModelConfig, n_layers: int) -> ModelConfig:
    return replace(cfg, coupling=replace(cfg.coupling, num_layers=n_layers),
                   integrator=replace(cfg.integrator, n_layers=n_layers))
