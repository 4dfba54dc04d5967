import math

import numpy as np
import pytest

from graphcon import autodiff as ad
from graphcon import diagnostics as D
from graphcon.checks import energy_profile_runs, random_graph
from graphcon.coupling import CouplingConfig, bind, init_params
from graphcon.dynamics import IntegratorConfig, graphcon_forward
from graphcon.graph import AdjacencyKind, from_edge_list, grid_graph, normalized_adjacency, path_graph, ring_graph
from graphcon.rng import Rng


# --- energy profiles ---------------------------------------------------------------


def test_constant_trajectory_is_degenerate():
    g = grid_graph(3, 3)
    rep = D.dirichlet_profile([np.ones((9, 2))] * 12, g)
    assert rep.degenerate and rep.oversmoothing and rep.slope == -math.inf
    assert not rep.energies.any()
    with pytest.raises(ValueError):
        D.dirichlet_profile([np.ones((9, 2))] * 5, g)


def test_exponential_profile_slope():
    g = path_graph(2)
    xs = [np.array([[0.0], [math.exp(-0.1 * n)]]) for n in range(101)]
    rep = D.dirichlet_profile(xs, g)
    assert rep.slope == pytest.approx(-0.2, abs=1e-9)
    assert rep.ratio == pytest.approx(math.exp(-20), rel=1e-9)
    assert rep.oversmoothing


def test_grid_profiles_seed0():
    g = grid_graph(10, 10)
    verdict = {}
    for model, a, traj in energy_profile_runs(0, alphas=(0.0,)):
        verdict[model] = D.dirichlet_profile(traj, g).oversmoothing
    assert verdict == {"gcn": True, "graphcon_gcn": False, "gat": True, "graphcon_gat": False}


def test_energy_functional_examples():
    adj = normalized_adjacency(path_graph(2), AdjacencyKind.ROW_STOCHASTIC)
    assert D.energy_functional(np.full(2, 3.0), np.zeros(2), adj) == 0.0
    a = adj.to_dense()
    x = np.array([0.0, 1.0])
    hand = 0.5 * (a[0, 1] * (x[0] - x[1]) ** 2 + a[1, 0] * (x[1] - x[0]) ** 2)
    assert D.energy_functional(x, np.zeros(2), adj) == hand == 0.5
    y = np.array([1.0, -2.0])
    assert D.energy_functional(x, y, adj) == 5.5


# --- scalar model ---------------------------------------------------------------------


def _model(seed=0, v=4, n=5, dt=0.05, act="tanh"):
    g = random_graph(v, 0.6, Rng(seed))
    return D.random_scalar_model(g, n, dt, seed, act)


def test_zero_weights_decouple():
    g = ring_graph(5)
    m = D.ScalarGCONModel(g, np.zeros((3, 5)), 0.1, np.zeros(5))
    x, y = Rng(0).normal(size=5), Rng(1).normal(size=5)
    tr = D.scalar_forward(m, x, y)
    for _ in range(3):
        y = y + 0.1 * ((0.0 - x) - y)
        x = x + 0.1 * y
    np.testing.assert_allclose(tr.xs[-1], x, atol=1e-15)
    np.testing.assert_allclose(tr.ys[-1], y, atol=1e-15)


def test_one_step_path_by_hand():
    g = path_graph(2)
    w, dt = np.array([[0.5, -2.0]]), 0.2
    m = D.ScalarGCONModel(g, w, dt, np.zeros(2))
    x, y = np.array([1.0, 0.5]), np.array([0.0, 1.0])
    tr = D.scalar_forward(m, x, y)
    c = 0.5 * (w[0] * x).sum() * np.ones(2)
    y1 = y + dt * (np.tanh(c) - x - y)
    np.testing.assert_allclose(tr.cs[0], c, atol=1e-15)
    np.testing.assert_allclose(tr.ys[1], y1, atol=1e-15)
    np.testing.assert_allclose(tr.xs[1], x + dt * y1, atol=1e-15)


def test_scalar_model_matches_general_forward():
    for v in (2, 3, 4):
        m, x0, y0 = _model(v, v, 6, 0.3)
        t = ad.Tape(grad_enabled=False)
        ws = [t.leaf(m.weights[n][:, None]) for n in range(6)]
        coupling = lambda x, n: ad.spmm(m.adjacency, ad.hadamard(x, ws[n]))
        cfg = IntegratorConfig(dt=0.3, alpha=1.0, gamma=1.0, n_layers=6, activation="tanh")
        traj = graphcon_forward(x0[:, None], y0[:, None], coupling, m.graph, cfg, t)
        st = D.scalar_forward(m, x0, y0)
        np.testing.assert_allclose(np.array(traj.xs)[:, :, 0], st.xs, atol=1e-14)
        np.testing.assert_allclose(np.array(traj.ys)[:, :, 0], st.ys, atol=1e-14)


def test_jacobian_special_cases():
    m, x0, y0 = _model(1)
    m.dt = 0.0
    tr = D.scalar_forward(m, x0, y0)
    np.testing.assert_array_equal(D.layer_jacobian_exact(m, 1, tr), np.eye(8))
    z = D.ScalarGCONModel(m.graph, np.zeros((2, 4)), 0.1, np.zeros(4))
    tr = D.scalar_forward(z, x0, y0)
    j = D.layer_jacobian_exact(z, 1, tr)
    # per node: [[1 - dt^2, dt - dt^2], [-dt, 1 - dt]], no coupling blocks
    blk = np.array([[1 - 0.01, 0.1 - 0.01], [-0.1, 0.9]])
    np.testing.assert_allclose(j, np.kron(np.eye(4), blk), atol=1e-15)
    assert D.interleave([1, 2], [3, 4]).tolist() == [1, 3, 2, 4]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_jacobian_product_two_oracles(seed):
    m, x0, y0 = _model(seed)
    tr = D.scalar_forward(m, x0, y0)
    prod = D.jacobian_product(m, tr)
    np.testing.assert_allclose(prod, D.tape_state_jacobian(m, x0, y0), atol=1e-12, rtol=0)
    np.testing.assert_allclose(prod, D.fd_state_jacobian(m, x0, y0), atol=1e-7, rtol=0)


def test_weight_gradients_fd():
    m, x0, y0 = _model(3)
    g = D.weight_gradients(m, x0, y0)
    h = 1e-6
    for n in range(m.num_layers):
        for k in range(m.num_nodes):
            old = m.weights[n, k]
            m.weights[n, k] = old + h
            fp = D.scalar_forward(m, x0, y0).loss(m.target)
            m.weights[n, k] = old - h
            fm = D.scalar_forward(m, x0, y0).loss(m.target)
            m.weights[n, k] = old
            assert g[n, k] == pytest.approx((fp - fm) / (2 * h), abs=1e-9)


# --- gradient bound ------------------------------------------------------------------


def test_bound_zero_case():
    g = ring_graph(6)
    m = D.ScalarGCONModel(g, np.zeros((10, 6)), 0.01, np.zeros(6))
    r = D.gradient_bound_check(m, np.zeros(6), np.zeros(6))
    assert r.observed == 0.0 and r.bound > 0 and r.passed


def test_bound_ring_example():
    m, x0, y0 = D.random_scalar_model(ring_graph(8), 20, 0.01, 1)
    r = D.gradient_bound_check(m, x0, y0)
    assert r.passed and r.gradients.shape == (20, 8)


def test_bound_formula_re_evaluation():
    m, x0, y0 = D.random_scalar_model(ring_graph(8), 20, 0.01, 1)
    beta, bp, dh, gam = D.gradient_bound_constants(m)
    assert dh == 1 / 3
    assert gam == 6 + 4 * bp * dh * np.abs(m.weights).sum(axis=1).max()
    n, dt, v = 20, 0.01, 8
    pref = bp * dh * dt / v
    want = pref * (1 + gam * n * dt) * (np.max(np.abs(x0) + np.abs(y0))
                                        + (np.max(np.abs(m.target)) + beta * math.sqrt(n * dt)) ** 2)
    assert D.gradient_bound_rhs(m, x0, y0) == pytest.approx(want, rel=1e-14)


def test_bound_preconditions():
    m, x0, y0 = D.random_scalar_model(ring_graph(8), 20, 1.0, 1)
    with pytest.raises(D.PreconditionError, match="dt"):
        D.gradient_bound_check(m, x0, y0)
    m, x0, y0 = D.random_scalar_model(ring_graph(8), 20, 0.01, 0)
    with pytest.raises(D.PreconditionError, match="Gamma"):
        D.gradient_bound_check(m, x0, y0)
    relu, x0, y0 = D.random_scalar_model(ring_graph(8), 5, 0.01, 1, activation="relu")
    with pytest.warns(UserWarning, match="skipped"):
        assert D.gradient_bound_check(relu, x0, y0).skipped


def test_bound_in_unit_horizon_mode():
    # dt = 1/N never satisfies the precondition; compare with the RHS directly
    for n in (10, 20, 40, 80):
        m, x0, y0 = D.random_scalar_model(ring_graph(8), n, 1.0 / n, 0)
        assert np.abs(D.weight_gradients(m, x0, y0)).max() <= D.gradient_bound_rhs(m, x0, y0)


# --- leading-order gradient ----------------------------------------------------------------


def test_leading_order_zero_cases():
    g = from_edge_list([(0, 1), (1, 2)], 4)  # node 3 isolated
    m, x0, y0 = D.random_scalar_model(g, 5, 0.05, 0)
    tr = D.scalar_forward(m, x0, y0)
    assert D.leading_order_gradient(m, 2, 3, tr, "neighbor_sum") == 0.0
    m.target = tr.xs[-1].copy()
    for variant in ("consistent", "neighbor_sum"):
        assert all(D.leading_order_gradient(m, l, k, tr, variant) == 0.0
                   for l in range(1, 6) for k in range(4))


def test_leading_order_ratio_near_eight():
    g = random_graph(6, 0.5, Rng(11))
    m, x0, y0 = D.random_scalar_model(g, 10, 0.01, 11)
    assert 6 <= D.leading_order_ratio(m, x0, y0) <= 10
    # the printed neighbour-sum term leaves an O(dt^2) remainder
    assert D.leading_order_ratio(m, x0, y0, "neighbor_sum") < 6


# --- hidden-state bound --------------------------------------------------------------------


def _gcn_traj(g, cfg, x0, seed=0):
    t = ad.Tape(grad_enabled=False)
    b = bind(init_params(CouplingConfig("gcn", x0.shape[1], cfg.n_layers), seed), t, g)
    return graphcon_forward(x0, None, b, g, cfg, t)


def test_hidden_state_bound():
    g = grid_graph(4, 4)
    cfg = IntegratorConfig(dt=0.1, alpha=1.0, gamma=1.0, n_layers=200, activation="tanh")
    res = D.hidden_state_bound_check(_gcn_traj(g, cfg, Rng(0).uniform(-1, 1, (16, 3))), cfg, 1.0)
    assert res.passed and res.max_ratio < 1
    zero = D.hidden_state_bound_check(_gcn_traj(g, cfg, np.zeros((16, 3))), cfg, 1.0)
    assert (zero.rhs >= 0).all() and zero.passed


def test_hidden_state_bound_guard():
    g = grid_graph(2, 2)
    cfg = IntegratorConfig(dt=0.5, alpha=0.5, gamma=1.0, n_layers=3, activation="tanh")
    with pytest.raises(D.PreconditionError, match="alpha > gamma"):
        D.hidden_state_bound_check(_gcn_traj(g, cfg, np.ones((4, 1))), cfg, 1.0)


# --- perturbations ---------------------------------------------------------------------------


def test_perturbation_identity_cases():
    sym = normalized_adjacency(ring_graph(6), AdjacencyKind.ROW_STOCHASTIC)
    z = D.perturbation_identity(sym, 0.5, np.zeros(6), np.zeros(6), 2.0, 0.01)
    assert z.residual == 0.0
    r = Rng(0)
    x0, y0 = 1e-2 * r.uniform(-1, 1, 6), 1e-2 * r.uniform(-1, 1, 6)
    res = D.perturbation_identity(sym, 0.5, x0, y0, 2.0, 0.01)
    assert not res.t3.any()
    # non-regular graph: asymmetric row-stochastic matrix, T3 is active
    asym = normalized_adjacency(path_graph(6), AdjacencyKind.ROW_STOCHASTIC)
    res = D.perturbation_identity(asym, 0.5, x0, y0, 5.0, 1e-3)
    assert np.abs(res.t3).max() > 0 and res.residual < 1e-4


def test_no_exponential_decay_small_perturbation():
    adj = normalized_adjacency(ring_graph(10), AdjacencyKind.ROW_STOCHASTIC)
    r = Rng(3)
    x0, y0 = 1e-3 * r.uniform(0, 1, 10), 1e-3 * r.uniform(0, 1, 10)
    rate = D.perturbation_decay_rate(adj, 0.5, x0, y0)
    assert rate >= -0.01
    both = D.perturbation_decay_rates(adj, 0.5, np.column_stack([x0, x0]), np.column_stack([y0, y0]))
    np.testing.assert_allclose(both, rate, rtol=1e-12)
    assert D.spectral_abscissa(adj, 0.5) == pytest.approx(0.0, abs=1e-12)


# --- depth sweep -------------------------------------------------------------------------------


def test_contractive_baseline_vanishes():
    rows = D.depth_gradient_sweep(grid_graph(4, 4), [20, 40], width=4)
    base = {r.depth: r.grad_max for r in rows if r.model == "baseline"}
    assert base[40] / base[20] < 0.1
    q = D.contractive_params(CouplingConfig("gcn", 4, 1), 0.5, 0).weights[0]
    np.testing.assert_allclose(q.T @ q, 0.25 * np.eye(4), atol=1e-14)


def test_single_layer_sweep_is_finite():
    rows = D.depth_gradient_sweep(grid_graph(3, 3), [1], width=2)
    assert len(rows) == 2 and all(np.isfinite(r.grad_max) and r.grad_max > 0 for r in rows)
