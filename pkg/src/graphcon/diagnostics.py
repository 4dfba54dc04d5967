"""Numerical checks of the oscillator theory.

Dirichlet-energy profiles and the oversmoothing classifier, the conserved
energy, the scalar per-node-weight model with its exact layer Jacobians, the
gradient upper bound and leading-order gradient, the hidden-state bound, the
perturbation energy identity, and a depth sweep of gradient norms.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import kernels
from .coupling import CouplingConfig, CouplingParams, bind, init_params
from .dynamics import (IntegratorConfig, NonFiniteError, Trajectory, baseline_forward, graphcon_forward,
                       linearized_perturbation_forward, state_cotangents)
from .graph import AdjacencyKind, Graph, NormalizedAdjacency, dirichlet_energy, normalized_adjacency
from .rng import Rng
from .training import mse_loss

# finite-N decision rule for oversmoothing; tunable
OVERSMOOTH_SLOPE = -0.05
OVERSMOOTH_RATIO = 1e-4
ENERGY_FLOOR = 1e-300

# (beta, beta') = (sup |sigma|, sup |sigma'|)
ACTIVATION_BOUNDS = {"tanh": (1.0, 1.0), "relu": (math.inf, 1.0), "identity": (math.inf, 1.0)}


class PreconditionError(ValueError):
    """A check was asked to certify a regime its inequality does not cover."""


# --- Dirichlet energy profiles ---------------------------------------------------


@dataclass
class EnergyReport:
    energies: np.ndarray
    slope: float
    ratio: float
    oversmoothing: bool
    degenerate: bool = False

    @property
    def num_layers(self) -> int:
        return len(self.energies) - 1


def _xs(traj) -> list:
    return traj.xs if isinstance(traj, Trajectory) else list(traj)


def dirichlet_profile(traj, g: Graph) -> EnergyReport:
    """Layer-wise Dirichlet energy and the oversmoothing verdict.

    The slope is a least-squares fit of ``ln E`` against ``n`` over
    ``n >= N/2``, skipping layers with ``E < 1e-300``. Oversmoothing means
    slope <= -0.05 and ``E(X^N)/E(X^0) <= 1e-4``.
    """
    xs = _xs(traj)
    if len(xs) < 10:
        raise ValueError(f"need a trajectory of at least 10 states, got {len(xs)}")
    e = np.array([dirichlet_energy(g, x) for x in xs])
    if not np.any(e > 0):
        return EnergyReport(e, -math.inf, 0.0, True, degenerate=True)
    n_layers = len(e) - 1
    n = np.arange(len(e))
    sel = (n >= n_layers / 2) & (e >= ENERGY_FLOOR)
    ratio = e[-1] / e[0] if e[0] > 0 else math.inf
    if sel.sum() < 2:
        # the tail collapsed below the floor
        return EnergyReport(e, -math.inf, ratio, ratio <= OVERSMOOTH_RATIO)
    slope = float(np.polyfit(n[sel].astype(np.float64), np.log(e[sel]), 1)[0])
    return EnergyReport(e, slope, ratio, bool(slope <= OVERSMOOTH_SLOPE and ratio <= OVERSMOOTH_RATIO))


def _dense(adj) -> np.ndarray:
    return adj.to_dense() if isinstance(adj, NormalizedAdjacency) else np.asarray(adj, dtype=np.float64)


def energy_functional(x, y, adj) -> float:
    """``sum_i |Y_i|^2 + 1/2 sum_i sum_j A_ij |X_i - X_j|^2``.

    The half weight counts every undirected edge once; with it the quantity is
    conserved by the undamped linear symmetric system.
    """
    a = _dense(adj)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim == 1:
        x, y = x[:, None], y[:, None]
    v = x.shape[0]
    if a.shape != (v, v) or y.shape != x.shape:
        raise ad.ShapeError(f"energy_functional: A {a.shape}, X {x.shape}, Y {y.shape}")
    d2 = ((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=2)
    return float((y * y).sum() + 0.5 * (a * d2).sum())


# --- scalar per-node-weight model -------------------------------------------------


@dataclass
class ScalarGCONModel:
    """m = 1, alpha = gamma = 1 GraphCON-GCN with one weight per node and layer.

    ``C_i = w_i X_i / d_i + sum_{j in N(i)} w_j X_j / sqrt(d_i d_j)`` with
    ``d`` the degree counting the self-loop.
    """

    graph: Graph
    weights: np.ndarray  # (N, v)
    dt: float
    target: np.ndarray  # (v,)
    activation: str = "tanh"
    adjacency: NormalizedAdjacency = field(init=False, repr=False)

    def __post_init__(self):
        v = self.graph.num_nodes
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=np.float64))
        self.target = np.asarray(self.target, dtype=np.float64).reshape(v)
        if self.weights.shape[1] != v:
            raise ad.ShapeError(f"weights {self.weights.shape} do not match {v} nodes")
        if self.activation not in ad.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not self.dt >= 0:
            raise ValueError("dt must be non-negative")
        self.adjacency = normalized_adjacency(self.graph, AdjacencyKind.SYM_GCN)

    @property
    def num_layers(self) -> int:
        return self.weights.shape[0]

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    @property
    def d_hat(self) -> float:
        """``max_{i,j} 1/sqrt(d_i d_j)``."""
        deg = np.diff(self.adjacency.indptr)
        return float(1.0 / deg.min())

    def coupling(self, x: np.ndarray, n: int) -> np.ndarray:
        a = self.adjacency
        return kernels.csr_spmm(a.indptr, a.indices, a.weights, (self.weights[n - 1] * x)[:, None])[:, 0]


def random_scalar_model(g: Graph, n_layers: int, dt: float, seed: int, activation="tanh",
                        weight_scale=1.0) -> tuple[ScalarGCONModel, np.ndarray, np.ndarray]:
    """Model with U[-s, s] weights and U[-1, 1] target, plus U[-1, 1] initial ``X, Y``."""
    r = Rng(seed)
    v = g.num_nodes
    w = r.uniform(-weight_scale, weight_scale, size=(n_layers, v))
    target = r.uniform(-1.0, 1.0, size=v)
    x0 = r.uniform(-1.0, 1.0, size=v)
    y0 = r.uniform(-1.0, 1.0, size=v)
    return ScalarGCONModel(g, w, dt, target, activation), x0, y0


@dataclass
class ScalarTrajectory:
    xs: np.ndarray  # (N+1, v)
    ys: np.ndarray  # (N+1, v)
    cs: np.ndarray  # (N, v); cs[n-1] is C^{n-1}

    def loss(self, target) -> float:
        r = self.xs[-1] - target
        return float(0.5 * np.dot(r, r) / r.size)


def scalar_forward(model: ScalarGCONModel, x0, y0) -> ScalarTrajectory:
    x = np.asarray(x0, dtype=np.float64).reshape(model.num_nodes).copy()
    y = np.asarray(y0, dtype=np.float64).reshape(model.num_nodes).copy()
    dt = model.dt
    xs, ys, cs = [x], [y], []
    for n in range(1, model.num_layers + 1):
        c = model.coupling(x, n)
        y = y + dt * ((ad.activation_value(c, model.activation) - x) - y)
        x = x + dt * y
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise NonFiniteError(n)
        xs.append(x)
        ys.append(y)
        cs.append(c)
    return ScalarTrajectory(np.array(xs), np.array(ys), np.array(cs).reshape(-1, model.num_nodes))


@dataclass
class ScalarTape:
    tape: ad.Tape
    x0: ad.Var
    y0: ad.Var
    w: list
    xs: list
    ys: list
    loss: ad.Var


def scalar_forward_tape(model: ScalarGCONModel, x0, y0) -> ScalarTape:
    """Same recursion on a tape, with ``X^0``, ``Y^0`` and every ``w^n`` as leaves."""
    tape = ad.Tape()
    x = tape.leaf(np.asarray(x0, dtype=np.float64).reshape(-1))
    y = tape.leaf(np.asarray(y0, dtype=np.float64).reshape(-1))
    xl, yl = x, y
    ws = [tape.leaf(model.weights[n]) for n in range(model.num_layers)]
    xs, ys = [x], [y]
    dt = model.dt
    for n in range(1, model.num_layers + 1):
        c = ad.spmm(model.adjacency, ad.hadamard(ws[n - 1], x))
        force = ad.sub(ad.sub(ad.activation(c, model.activation), x), y)
        y = ad.add(y, ad.scale(force, dt))
        x = ad.add(x, ad.scale(y, dt))
        xs.append(x)
        ys.append(y)
    loss = mse_loss(x, model.target)
    return ScalarTape(tape, xl, yl, ws, xs, ys, loss)


def weight_gradients(model: ScalarGCONModel, x0, y0) -> np.ndarray:
    """``dJ/dw^n_k`` as an (N, v) array."""
    st = scalar_forward_tape(model, x0, y0)
    st.tape.backward(st.loss)
    return np.array([st.tape.grad(w)[:, 0] for w in st.w]).reshape(model.num_layers, model.num_nodes)


def interleave(x, y) -> np.ndarray:
    """``[X_1, Y_1, ..., X_v, Y_v]``."""
    z = np.empty(2 * len(x))
    z[0::2], z[1::2] = x, y
    return z


def layer_jacobian_exact(model: ScalarGCONModel, n: int, traj: ScalarTrajectory) -> np.ndarray:
    """``dZ^n/dZ^{n-1} = I + dt E + dt^2 F`` in interleaved order.

    With ``B_ij = sigma'(C_i) A_ij w_j - delta_ij`` (``A`` the normalized
    adjacency with self-loops, ``w = w^n``):

    * ``E[Y_i, X_j] = B_ij``, ``E[X_i, Y_i] = 1``, ``E[Y_i, Y_i] = -1``
    * ``F[X_i, X_j] = B_ij``, ``F[X_i, Y_i] = -1``
    """
    if not 1 <= n <= model.num_layers:
        raise IndexError(f"layer {n} outside 1..{model.num_layers}")
    v = model.num_nodes
    sp = ad.activation_derivative(traj.cs[n - 1], model.activation)
    b = sp[:, None] * model.adjacency.to_dense() * model.weights[n - 1][None, :] - np.eye(v)
    e = np.zeros((2 * v, 2 * v))
    f = np.zeros((2 * v, 2 * v))
    xi, yi = np.arange(0, 2 * v, 2), np.arange(1, 2 * v, 2)
    e[np.ix_(yi, xi)] = b
    e[xi, yi] = 1.0
    e[yi, yi] = -1.0
    f[np.ix_(xi, xi)] = b
    f[xi, yi] = -1.0
    dt = model.dt
    return np.eye(2 * v) + dt * e + dt * dt * f


def jacobian_product(model: ScalarGCONModel, traj: ScalarTrajectory, start: int = 0,
                     stop: int | None = None) -> np.ndarray:
    """``dZ^stop/dZ^start`` as the ordered product of layer Jacobians."""
    stop = model.num_layers if stop is None else stop
    out = np.eye(2 * model.num_nodes)
    for n in range(start + 1, stop + 1):
        out = layer_jacobian_exact(model, n, traj) @ out
    return out


def tape_state_jacobian(model: ScalarGCONModel, x0, y0) -> np.ndarray:
    """``dZ^N/dZ^0`` by one reverse sweep per output coordinate."""
    st = scalar_forward_tape(model, x0, y0)
    v = model.num_nodes
    jac = np.zeros((2 * v, 2 * v))
    for i in range(v):
        for slot, var in ((0, st.xs[-1]), (1, st.ys[-1])):
            st.tape.backward(ad.take_rows(var, [i]))
            jac[2 * i + slot] = interleave(st.tape.grad(st.x0)[:, 0], st.tape.grad(st.y0)[:, 0])
    return jac


def fd_state_jacobian(model: ScalarGCONModel, x0, y0, h: float = 1e-6) -> np.ndarray:
    """Central-difference ``dZ^N/dZ^0``."""
    z0 = interleave(np.asarray(x0, float).reshape(-1), np.asarray(y0, float).reshape(-1))
    jac = np.zeros((z0.size, z0.size))
    for k in range(z0.size):
        cols = []
        for s in (1.0, -1.0):
            z = z0.copy()
            z[k] += s * h
            t = scalar_forward(model, z[0::2], z[1::2])
            cols.append(interleave(t.xs[-1], t.ys[-1]))
        jac[:, k] = (cols[0] - cols[1]) / (2 * h)
    return jac


# --- gradient bounds ---------------------------------------------------------------


@dataclass
class GradientBoundResult:
    observed: float
    bound: float
    gamma_const: float
    d_hat: float
    gradients: np.ndarray | None = None
    skipped: bool = False

    @property
    def passed(self) -> bool:
        return self.skipped or self.observed <= self.bound


def gradient_bound_constants(model: ScalarGCONModel) -> tuple[float, float, float, float]:
    """``(beta, beta', D_hat, Gamma)`` with ``Gamma = 6 + 4 beta' D_hat max_n |w^n|_1``."""
    beta, beta_p = ACTIVATION_BOUNDS[model.activation]
    d_hat = model.d_hat
    wmax = float(np.abs(model.weights).sum(axis=1).max()) if model.num_layers else 0.0
    return beta, beta_p, d_hat, 6.0 + 4.0 * beta_p * d_hat * wmax


def gradient_bound_rhs(model: ScalarGCONModel, x0, y0) -> float:
    beta, beta_p, d_hat, gam = gradient_bound_constants(model)
    n, dt, v = model.num_layers, model.dt, model.num_nodes
    pref = beta_p * d_hat * dt * (1.0 + gam * n * dt) / v
    init = float(np.max(np.abs(x0) + np.abs(y0)))
    tgt = float(np.max(np.abs(model.target)))
    return pref * init + pref * (tgt + beta * math.sqrt(n * dt)) ** 2


def gradient_bound_precondition(model: ScalarGCONModel) -> None:
    """Raise unless ``dt < 1`` and ``(1 + Gamma dt/2)^k <= 1 + k Gamma dt`` for k < N."""
    _, _, _, gam = gradient_bound_constants(model)
    dt = model.dt
    if not dt < 1.0:
        raise PreconditionError(f"dt={dt} must be < 1 for the hidden-state bound")
    for k in range(1, model.num_layers):
        if (1.0 + 0.5 * gam * dt) ** k > 1.0 + k * gam * dt:
            raise PreconditionError(
                f"(1 + Gamma dt/2)^{k} > 1 + {k} Gamma dt with Gamma={gam:.4g}, dt={dt}")


def gradient_bound_check(model: ScalarGCONModel, x0, y0) -> GradientBoundResult:
    """Compare every ``|dJ/dw^n_k|`` with the closed-form upper bound."""
    _, _, d_hat, gam = gradient_bound_constants(model)
    if not math.isfinite(ACTIVATION_BOUNDS[model.activation][0]):
        warnings.warn(f"{model.activation} is unbounded; gradient bound check skipped", stacklevel=2)
        return GradientBoundResult(math.nan, math.inf, gam, d_hat, skipped=True)
    gradient_bound_precondition(model)
    grads = weight_gradients(model, x0, y0)
    obs = float(np.max(np.abs(grads))) if grads.size else 0.0
    return GradientBoundResult(obs, gradient_bound_rhs(model, x0, y0), gam, d_hat, grads)


def leading_order_gradient(model: ScalarGCONModel, layer: int, k: int, traj: ScalarTrajectory,
                           variant: str = "consistent") -> float:
    """Leading ``O(dt^2)`` term of ``dJ/dw^layer_k``.

    ``variant="consistent"`` is the term obtained by expanding the recursion,
    ``dt^2 (N - l + 1)/v * sum_{j in N(k) + k} sigma'(C_j) X_k (X^N_j - Xbar_j)/sqrt(d_j d_k)``
    (its remainder is ``O(dt^3)`` at fixed N). ``variant="neighbor_sum"`` is
    ``2 dt^2/v * sum_{j in N(k)} sigma'(C_j) X_j (X^N_j - Xbar_j)/sqrt(d_j d_k)``.
    """
    n_layers, v, dt = model.num_layers, model.num_nodes, model.dt
    if not 1 <= layer <= n_layers:
        raise IndexError(f"layer {layer} outside 1..{n_layers}")
    a = model.adjacency
    lo, hi = a.indptr[k], a.indptr[k + 1]
    nbrs, wts = a.indices[lo:hi], a.weights[lo:hi]
    c = traj.cs[layer - 1]
    x_prev = traj.xs[layer - 1]
    resid = traj.xs[-1] - model.target
    sp = ad.activation_derivative(c[nbrs], model.activation)
    if variant == "consistent":
        s = np.sum(sp * x_prev[k] * resid[nbrs] * wts)
        return float(dt * dt * (n_layers - layer + 1) / v * s)
    if variant == "neighbor_sum":
        keep = nbrs != k
        s = np.sum((sp * x_prev[nbrs] * resid[nbrs] * wts)[keep])
        return float(2.0 * dt * dt / v * s)
    raise ValueError(f"unknown variant {variant!r}")


def leading_order_residual(model: ScalarGCONModel, x0, y0, variant: str = "consistent") -> float:
    """``max_{l,k} |dJ/dw^l_k - leading term|``."""
    grads = weight_gradients(model, x0, y0)
    traj = scalar_forward(model, x0, y0)
    lead = np.array([[leading_order_gradient(model, l, k, traj, variant)
                      for k in range(model.num_nodes)] for l in range(1, model.num_layers + 1)])
    return float(np.max(np.abs(grads - lead)))


def leading_order_ratio(model: ScalarGCONModel, x0, y0, variant: str = "consistent") -> float:
    """Residual at ``dt`` over residual at ``dt/2`` (same weights, same N)."""
    half = ScalarGCONModel(model.graph, model.weights, model.dt / 2, model.target, model.activation)
    return leading_order_residual(model, x0, y0, variant) / leading_order_residual(half, x0, y0, variant)


# --- hidden-state bound ---------------------------------------------------------------


@dataclass
class HiddenStateBoundResult:
    lhs: np.ndarray  # (N+1, v) |X^n_i|^2
    rhs: np.ndarray  # (N+1, v)
    ok: np.ndarray  # (N+1, v) bool

    @property
    def passed(self) -> bool:
        return bool(self.ok.all())

    @property
    def violations(self) -> int:
        return int((~self.ok).sum())

    @property
    def max_ratio(self) -> float:
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(self.rhs > 0, self.lhs / self.rhs, np.where(self.lhs > 0, np.inf, 0.0))
        return float(r.max())


def hidden_state_bound_check(traj: Trajectory, cfg: IntegratorConfig, beta: float) -> HiddenStateBoundResult:
    """``|X^n_i|^2 <= |X^0_i|^2 + |Y^0_i|^2/gamma + m beta^2 t_n / (2 gamma (alpha - gamma dt))``."""
    dt, alpha, gamma = cfg.dt, cfg.alpha, cfg.gamma
    if not alpha > gamma * dt:
        raise PreconditionError(f"need alpha > gamma*dt, got alpha={alpha}, gamma*dt={gamma * dt}")
    if not dt * alpha < 1.0:
        raise PreconditionError(f"need dt < 1/alpha, got dt={dt}, alpha={alpha}")
    if not math.isfinite(beta):
        raise PreconditionError("activation must be bounded")
    if traj.ys is None:
        raise ValueError("hidden-state bound needs a GraphCON trajectory")
    xs = np.asarray(traj.xs)
    m = xs.shape[2]
    lhs = (xs ** 2).sum(axis=2)
    base = lhs[0] + (np.asarray(traj.ys[0]) ** 2).sum(axis=1) / gamma
    t = dt * np.arange(len(xs))
    rhs = base[None, :] + (m * beta * beta * t / (2.0 * gamma * (alpha - gamma * dt)))[:, None]
    return HiddenStateBoundResult(lhs, rhs, lhs <= rhs)


# --- perturbations of constant steady states ----------------------------------------------


@dataclass
class PerturbationIdentityResult:
    times: np.ndarray
    lhs: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    t3: np.ndarray

    @property
    def residual(self) -> float:
        err = np.abs(self.lhs - (self.t1 + self.t2 + self.t3))
        return float(np.max(err / np.maximum(self.lhs, 1e-12)))


def _cumtrapz(f: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(f)
    out[1:] = np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(t))
    return out


def perturbation_identity(ahat: NormalizedAdjacency, alpha: float, xhat0, yhat0, t_final: float,
                          dt_fine: float) -> PerturbationIdentityResult:
    """Both sides of the perturbation energy balance along an RK4 trajectory.

    ``H = (1/v)(sum |Y_i|^2 + 1/2 sum_ij S_ij |X_j - X_i|^2)`` with
    ``S = (A + A^T)/2`` and

    * ``T1 = H(0) e^{-2 alpha t}``
    * ``T2 = (alpha/v) sum_ij S_ij int |X_j - X_i|^2 e^{2 alpha (s - t)}``
    * ``T3 = (1/2v) sum_ij (A_ij - A_ji) int (Y_i + Y_j).(X_j - X_i) e^{2 alpha (s - t)}``

    The integrals use the trapezoid rule on the RK4 grid.
    """
    traj = linearized_perturbation_forward(xhat0, yhat0, ahat, alpha, dt_fine, t_final)
    a = _dense(ahat)
    v = a.shape[0]
    s = 0.5 * (a + a.T)
    k = a - a.T
    t = traj.times
    xs = np.asarray(traj.xs)
    ys = np.asarray(traj.ys)
    dx = xs[:, None, :, :] - xs[:, :, None, :]  # [t, i, j] = X_j - X_i
    d2 = (dx ** 2).sum(axis=3)
    sy = ys[:, :, None, :] + ys[:, None, :, :]
    cross = (sy * dx).sum(axis=3)
    f2 = np.einsum("ij,tij->t", s, d2)
    f3 = np.einsum("ij,tij->t", k, cross)
    h = ((ys ** 2).sum(axis=(1, 2)) + 0.5 * f2) / v
    decay = np.exp(-2.0 * alpha * t)
    grow = np.exp(2.0 * alpha * t)
    t1 = h[0] * decay
    t2 = alpha / v * _cumtrapz(f2 * grow, t) * decay
    t3 = 0.5 / v * _cumtrapz(f3 * grow, t) * decay
    return PerturbationIdentityResult(t, h, t1, t2, t3)


def perturbation_identity_check(ahat, alpha, xhat0, yhat0, t_final, dt_fine) -> float:
    """Max over the grid of ``|LHS - (T1 + T2 + T3)| / max(LHS, 1e-12)``."""
    return perturbation_identity(ahat, alpha, xhat0, yhat0, t_final, dt_fine).residual


def linearized_matrix(ahat, alpha: float) -> np.ndarray:
    """Generator of ``(X, Y)' = M (X, Y)`` for the linearized system (block order)."""
    a = _dense(ahat)
    v = a.shape[0]
    eye = np.eye(v)
    return np.block([[np.zeros((v, v)), eye], [a - eye, -alpha * eye]])


def spectral_abscissa(ahat, alpha: float) -> float:
    return float(np.max(np.linalg.eigvals(linearized_matrix(ahat, alpha)).real))


def perturbation_decay_rates(ahat, alpha: float, xhat0, yhat0, t_final: float = 20.0,
                             dt_fine: float = 1e-2) -> np.ndarray:
    """Least-squares slope of ``ln(|X|^2 + |Y|^2)`` over ``[0, t_final]``, per column.

    The system is linear with no coupling across columns, so each column of
    ``(v, k)`` inputs is an independent perturbation.
    """
    traj = linearized_perturbation_forward(xhat0, yhat0, ahat, alpha, dt_fine, t_final)
    en = np.array([(x ** 2).sum(axis=0) + (y ** 2).sum(axis=0) for x, y in zip(traj.xs, traj.ys)])
    if not np.all(en > 0):
        raise ValueError("perturbation energy vanished; rate undefined")
    return np.polyfit(traj.times, np.log(en), 1)[0]


def perturbation_decay_rate(ahat, alpha: float, xhat0, yhat0, t_final: float = 20.0,
                            dt_fine: float = 1e-2) -> float:
    """Decay rate of a single perturbation (all columns pooled into one norm)."""
    x0 = np.asarray(xhat0, dtype=np.float64).reshape(-1, 1)
    y0 = np.asarray(yhat0, dtype=np.float64).reshape(-1, 1)
    return float(perturbation_decay_rates(ahat, alpha, x0, y0, t_final, dt_fine)[0])


# --- depth sweep ---------------------------------------------------------------------------


def contractive_params(cfg: CouplingConfig, scale: float, seed: int) -> CouplingParams:
    """``scale * Q`` per layer with ``Q`` a random orthogonal matrix."""
    r = Rng(seed)
    ws = []
    for _ in range(cfg.num_sets):
        q, rr = np.linalg.qr(r.normal(size=(cfg.width, cfg.width)))
        ws.append(scale * q * np.sign(np.diag(rr))[None, :])
    att = [r.uniform(-1, 1, size=(2 * cfg.width, 1)) / np.sqrt(2 * cfg.width) for _ in range(cfg.num_sets)] \
        if cfg.kind.value == "gat" else []
    return CouplingParams(cfg, ws, att)


@dataclass
class DepthRow:
    model: str
    depth: int
    dt: float
    grad_max: float
    grad_min_nonzero: float
    weight_grad: float


def layer_gradient_stats(params: CouplingParams, g: Graph, x0: np.ndarray, target: np.ndarray,
                         cfg: IntegratorConfig, baseline: bool) -> tuple[float, float, float]:
    """``(max |dJ/dZ^1|, min nonzero |dJ/dZ^1|, max |dJ/dW^1|)`` with ``J`` the MSE to ``target``."""
    tape = ad.Tape()
    bound = bind(params, tape, g)
    x = tape.leaf(x0)
    traj = baseline_forward(x, bound, g, cfg) if baseline else graphcon_forward(x, None, bound, g, cfg)
    loss = mse_loss(traj.x_vars[-1], target)
    tape.backward(loss)
    z1 = np.abs(state_cotangents(traj, tape)[1])
    nz = z1[z1 > 0]
    wg = tape.grad(bound.weights[0])
    return float(z1.max()), float(nz.min()) if nz.size else 0.0, float(np.abs(wg).max())


def depth_gradient_sweep(g: Graph, depths, width: int = 8, seed: int = 0, dt: float | None = None,
                         activation: str = "tanh", baseline_scale: float = 0.5) -> list[DepthRow]:
    """Layer-1 gradient statistics for GraphCON-GCN and a contractive stacked GCN.

    ``dt=None`` uses ``dt = 1/N`` for GraphCON; otherwise the given step at every
    depth. GraphCON weights are the default uniform initialisation; baseline
    weights are ``baseline_scale`` times random orthogonal matrices.
    """
    r = Rng(seed)
    v = g.num_nodes
    x0 = r.uniform(0.0, 1.0, size=(v, width))
    target = r.uniform(-1.0, 1.0, size=(v, width))
    rows = []
    for n in depths:
        ccfg = CouplingConfig("gcn", width, n)
        step = 1.0 / n if dt is None else dt
        icfg = IntegratorConfig(dt=step, alpha=1.0, gamma=1.0, n_layers=n, activation=activation)
        p = init_params(ccfg, r.spawn("graphcon", n))
        rows.append(DepthRow("graphcon", n, step, *layer_gradient_stats(p, g, x0, target, icfg, False)))
        bcfg = IntegratorConfig(dt=1.0, gamma=1.0, n_layers=n, activation=activation)
        pb = contractive_params(ccfg, baseline_scale, r.spawn("baseline", n).seed)
        rows.append(DepthRow("baseline", n, 1.0, *layer_gradient_stats(pb, g, x0, target, bcfg, True)))
    return rows
