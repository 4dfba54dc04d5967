"""Time stepping for graph-coupled oscillators.

``graphcon_forward`` is the damped symplectic-Euler (IMEX) scheme used as the
network: the velocity is advanced first and the position update uses the new
velocity. ``baseline_forward`` is the fixed-point iteration that gives a plain
stacked GNN. The RK4 integrators are high-order references for the
continuous system and are not differentiable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np

from . import autodiff as ad
from . import kernels
from .graph import Graph, NormalizedAdjacency


class NonFiniteError(FloatingPointError):
    def __init__(self, layer: int, where: str = "state"):
        super().__init__(f"non-finite {where} at layer {layer}")
        self.layer = layer


class Y0Mode(str, Enum):
    COPY_X0 = "copy_x0"
    ZERO = "zero"


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1.0
    alpha: float = 1.0
    gamma: float = 1.0
    n_layers: int = 1
    activation: str = "relu"
    y0_mode: Y0Mode = Y0Mode.COPY_X0

    def __post_init__(self):
        object.__setattr__(self, "y0_mode", Y0Mode(self.y0_mode))
        if not self.dt >= 0:
            raise ValueError(f"dt must be non-negative, got {self.dt}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        if self.n_layers < 0:
            raise ValueError("n_layers must be >= 0")
        if self.activation not in ad.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    def with_(self, **kw) -> "IntegratorConfig":
        return replace(self, **kw)


@dataclass
class Trajectory:
    """States for layers ``0..N``. ``ys`` is None for the baseline stack."""

    xs: list[np.ndarray]
    ys: list[np.ndarray] | None
    config: object = None
    times: np.ndarray | None = None
    x_vars: list = field(default_factory=list, repr=False)
    y_vars: list = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.xs)

    @property
    def num_layers(self) -> int:
        return len(self.xs) - 1


def _as_var(tape: ad.Tape | None, x) -> ad.Var:
    if isinstance(x, ad.Var):
        return x
    tape = tape if tape is not None else ad.Tape(grad_enabled=False)
    return tape.leaf(np.asarray(x, dtype=np.float64))


def initial_velocity(x0: ad.Var, mode) -> ad.Var:
    if Y0Mode(mode) is Y0Mode.COPY_X0:
        return x0
    return x0.tape.leaf(np.zeros(x0.shape))


def graphcon_forward(x0, y0, coupling: Callable, g: Graph | None, cfg: IntegratorConfig,
                     tape: ad.Tape | None = None) -> Trajectory:
    """Roll out ``cfg.n_layers`` IMEX steps.

    Per step, in this floating-point order::

        Y <- Y + dt * ((sigma(F(X)) - gamma*X) - alpha*Y)
        X <- X + dt * Y

    ``coupling(X, n)`` returns ``F`` for step ``n`` (0-based). ``x0``/``y0``
    may be Vars (to differentiate through the rollout) or arrays; ``y0=None``
    applies ``cfg.y0_mode``.
    """
    x = _as_var(tape, x0)
    if g is not None and x.shape[0] != g.num_nodes:
        raise ad.ShapeError(f"X0 has {x.shape[0]} rows, graph has {g.num_nodes} nodes")
    y = initial_velocity(x, cfg.y0_mode) if y0 is None else _as_var(x.tape, y0)
    if y.shape != x.shape:
        raise ad.ShapeError(f"Y0 shape {y.shape} != X0 shape {x.shape}")
    xs, ys, xv, yv = [x.value], [y.value], [x], [y]
    dt, gamma, alpha = cfg.dt, cfg.gamma, cfg.alpha
    for n in range(1, cfg.n_layers + 1):
        s = ad.activation(coupling(x, n - 1), cfg.activation)
        force = ad.sub(ad.sub(s, ad.scale(x, gamma)), ad.scale(y, alpha))
        y = ad.add(y, ad.scale(force, dt))
        x = ad.add(x, ad.scale(y, dt))
        if not (np.isfinite(x.value).all() and np.isfinite(y.value).all()):
            raise NonFiniteError(n)
        xs.append(x.value)
        ys.append(y.value)
        xv.append(x)
        yv.append(y)
    return Trajectory(xs, ys, cfg, cfg.dt * np.arange(cfg.n_layers + 1), xv, yv)


def baseline_forward(x0, coupling: Callable, g: Graph | None, cfg: IntegratorConfig,
                     tape: ad.Tape | None = None) -> Trajectory:
    """Stacked GNN ``X <- (dt/gamma) * sigma(F(X))``; dt = gamma = 1 is a plain GCN/GAT."""
    x = _as_var(tape, x0)
    if g is not None and x.shape[0] != g.num_nodes:
        raise ad.ShapeError(f"X0 has {x.shape[0]} rows, graph has {g.num_nodes} nodes")
    c = cfg.dt / cfg.gamma
    xs, xv = [x.value], [x]
    for n in range(1, cfg.n_layers + 1):
        x = ad.activation(coupling(x, n - 1), cfg.activation)
        if c != 1.0:
            x = ad.scale(x, c)
        if not np.isfinite(x.value).all():
            raise NonFiniteError(n)
        xs.append(x.value)
        xv.append(x)
    return Trajectory(xs, None, cfg, None, xv, [])


def closed_form_uncoupled(x0, y0, t: float):
    """Exact solution of ``X'' = -X``: returns ``(X(t), Y(t))``."""
    x0 = np.asarray(x0, dtype=np.float64)
    y0 = np.asarray(y0, dtype=np.float64)
    c, s = np.cos(t), np.sin(t)
    return x0 * c + y0 * s, -x0 * s + y0 * c


def continuous_rhs(force: Callable, cfg: IntegratorConfig) -> Callable:
    """Right-hand side of the first-order system for a fixed coupling.

    ``force(X)`` returns ``F(X)`` as an array; the result maps ``(X, Y)`` to
    ``(Y, sigma(F(X)) - gamma X - alpha Y)``.
    """
    gamma, alpha, kind = cfg.gamma, cfg.alpha, cfg.activation

    def rhs(x, y):
        return y, ad.activation_value(force(x), kind) - gamma * x - alpha * y

    return rhs


def spmm_force(adj: NormalizedAdjacency, weight=None) -> Callable:
    """``F(X) = A X W`` with a fixed array ``W`` (identity when omitted)."""
    def force(x):
        xw = x if weight is None else x @ weight
        return kernels.csr_spmm(adj.indptr, adj.indices, adj.weights, xw)

    return force


def reference_rk4_forward(x0, y0, rhs: Callable, dt_fine: float, t_final: float,
                          record_every: int = 1) -> Trajectory:
    """Classical RK4 on ``(X, Y)' = rhs(X, Y)`` from 0 to ``t_final``.

    The step is adjusted to ``t_final / round(t_final / dt_fine)`` so the grid
    ends exactly at ``t_final``.
    """
    if dt_fine <= 0 or t_final < 0:
        raise ValueError("need dt_fine > 0 and t_final >= 0")
    steps = int(round(t_final / dt_fine))
    h = t_final / steps if steps else 0.0
    x = np.array(x0, dtype=np.float64)
    y = np.array(y0, dtype=np.float64)
    xs, ys, ts = [x.copy()], [y.copy()], [0.0]
    for k in range(1, steps + 1):
        k1x, k1y = rhs(x, y)
        k2x, k2y = rhs(x + 0.5 * h * k1x, y + 0.5 * h * k1y)
        k3x, k3y = rhs(x + 0.5 * h * k2x, y + 0.5 * h * k2y)
        k4x, k4y = rhs(x + h * k3x, y + h * k3y)
        x = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        y = y + (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise NonFiniteError(k, "RK4 state")
        if k % record_every == 0 or k == steps:
            xs.append(x)
            ys.append(y)
            ts.append(k * h)
    return Trajectory(xs, ys, None, np.asarray(ts))


def linearized_perturbation_forward(xhat0, yhat0, ahat: NormalizedAdjacency, alpha: float,
                                    dt_fine: float, t_final: float, record_every: int = 1) -> Trajectory:
    """RK4 for perturbations of a constant steady state:
    ``X' = Y``, ``Y' = A X - X - alpha Y`` with a fixed row-stochastic ``A``."""
    ip, ix, w = ahat.indptr, ahat.indices, ahat.weights

    def rhs(x, y):
        return y, kernels.csr_spmm(ip, ix, w, x) - x - alpha * y

    x0 = np.asarray(xhat0, dtype=np.float64)
    y0 = np.asarray(yhat0, dtype=np.float64)
    if x0.ndim == 1:
        x0, y0 = x0[:, None], y0[:, None]
    return reference_rk4_forward(x0, y0, rhs, dt_fine, t_final, record_every)


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Columns: layer, node, feature_index, x, y (y empty for the baseline)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["layer", "node", "feature_index", "x", "y"])
        for n, x in enumerate(traj.xs):
            y = traj.ys[n] if traj.ys is not None else None
            for i in range(x.shape[0]):
                for k in range(x.shape[1]):
                    yv = repr(float(y[i, k])) if y is not None else ""
                    w.writerow([n, i, k, repr(float(x[i, k])), yv])


def read_trajectory_csv(path):
    """Inverse of :func:`write_trajectory_csv`; returns ``(xs, ys)`` arrays of shape (L, v, m)."""
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    L = 1 + max(int(r["layer"]) for r in rows)
    v = 1 + max(int(r["node"]) for r in rows)
    m = 1 + max(int(r["feature_index"]) for r in rows)
    xs = np.zeros((L, v, m))
    ys = np.full((L, v, m), np.nan)
    for r in rows:
        idx = (int(r["layer"]), int(r["node"]), int(r["feature_index"]))
        xs[idx] = float(r["x"])
        if r["y"]:
            ys[idx] = float(r["y"])
    return xs, ys


def state_cotangents(traj: Trajectory, tape: ad.Tape) -> list[np.ndarray]:
    """``dJ/dZ^n`` for n = 0..N after ``tape.backward(J)``.

    ``Z^n = (X^n, Y^n)`` are treated as independent coordinates, so the tape
    cotangent of ``Y^n`` loses its path through ``X^n = X^{n-1} + dt Y^n``.
    Each entry is ``X`` cotangents stacked over ``Y`` cotangents (just ``X``
    for the baseline stack).
    """
    out = []
    dt = traj.config.dt if traj.config is not None else 0.0
    for n, xv in enumerate(traj.x_vars):
        gx = tape.grad(xv)
        if traj.y_vars:
            gy = tape.grad(traj.y_vars[n])
            if n > 0:
                gy = gy - dt * gx
            out.append(np.vstack([gx, gy]))
        else:
            out.append(gx)
    return out
