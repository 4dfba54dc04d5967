import numpy as np
import pytest

from graphcon import autodiff as ad
from graphcon.graph import from_edge_list, normalized_adjacency, path_graph
from graphcon.rng import Rng

from conftest import central_diff, dense_graph


def _grad(build, *values):
    """Tape gradients of ``total(build(*leaves))`` w.r.t. each leaf."""
    t = ad.Tape()
    leaves = [t.leaf(v) for v in values]
    t.backward(ad.total(build(*leaves)))
    return [t.grad(l) for l in leaves]


def _value(build, *values):
    t = ad.Tape(grad_enabled=False)
    return float(ad.total(build(*[t.leaf(v) for v in values])).value[0, 0])


def _fd_check(build, values, tol=1e-6, h=1e-6):
    got = _grad(build, *values)
    for k, v in enumerate(values):
        def f(x, k=k):
            vals = list(values)
            vals[k] = x
            return _value(build, *vals)
        fd = central_diff(f, v, h)
        err = np.abs(got[k] - fd) / np.maximum(np.abs(fd), 1e-8)
        assert err.max() < tol, (k, err.max())


def test_matmul_identity():
    m = Rng(0).normal(size=(2, 3))
    t = ad.Tape()
    a, b = t.leaf(np.eye(2)), t.leaf(m)
    out = ad.matmul(a, b)
    np.testing.assert_array_equal(out.value, m)
    t.backward(ad.total(out))
    np.testing.assert_array_equal(t.grad(b), np.ones((2, 3)))


def test_scale_by_zero():
    t = ad.Tape()
    x = t.leaf(np.ones((2, 2)))
    y = ad.scale(x, 0.0)
    assert not y.value.any()
    t.backward(ad.total(y))
    assert not t.grad(x).any()


def test_matmul_fd():
    r = Rng(1)
    _fd_check(lambda a, b: ad.hadamard(ad.matmul(a, b), ad.matmul(a, b)),
              [r.normal(size=(3, 4)), r.normal(size=(4, 2))])


def test_elementwise_and_structural_ops_fd():
    r = Rng(2)
    a, b = r.normal(size=(4, 3)), r.normal(size=(4, 3))

    def build(x, y):
        c = ad.concat_cols(ad.sub(x, y), ad.hadamard(x, y))
        s = ad.slice_rows(c, 1, 3)
        g = ad.take_rows(c, [0, 0, 3])
        return ad.concat_cols(ad.hadamard(s, s), ad.scale(ad.slice_rows(g, 0, 2), 2.0))

    _fd_check(build, [a, b])


def test_spmm_examples():
    iso = from_edge_list([], 3)
    t = ad.Tape()
    x = t.leaf(np.arange(6.0).reshape(3, 2))
    np.testing.assert_array_equal(ad.spmm(normalized_adjacency(iso), x).value, x.value)
    y = ad.spmm(normalized_adjacency(path_graph(2)), t.leaf([[1.0], [3.0]]))
    np.testing.assert_allclose(y.value, [[2.0], [2.0]], atol=1e-15)


def test_spmm_dense_oracle_and_gradient():
    g = dense_graph(3, 8)
    adj = normalized_adjacency(g, "row_stochastic")
    x = Rng(3).normal(size=(8, 2))
    t = ad.Tape()
    xv = t.leaf(x)
    out = ad.spmm(adj, xv)
    np.testing.assert_allclose(out.value, adj.to_dense() @ x, atol=1e-12)
    _fd_check(lambda z: ad.hadamard(ad.spmm(adj, z), ad.spmm(adj, z)), [x])


def test_activation_values():
    t = ad.Tape()
    x = t.leaf([[-1.0], [2.0], [0.0]])
    assert ad.activation(x, "relu").value[:, 0].tolist() == [0.0, 2.0, 0.0]
    assert ad.activation(x, "tanh").value[2, 0] == 0.0
    assert ad.activation_derivative(np.zeros(1), "tanh")[0] == 1.0
    with pytest.raises(ValueError):
        ad.activation(x, "sigmoid")


@pytest.mark.parametrize("kind", ad.ACTIVATIONS)
def test_activation_fd(kind):
    x = Rng(4).normal(size=(5, 5))
    x[np.abs(x) < 1e-3] = 0.5  # away from the ReLU kink
    _fd_check(lambda z: ad.hadamard(ad.activation(z, kind), ad.activation(z, kind)), [x])


def test_edge_scores_examples():
    g = path_graph(2)
    t = ad.Tape()
    xw = t.leaf([[2.0], [3.0]])
    s = ad.edge_scores(xw, t.leaf([[1.0], [1.0]]), g, 0.2)
    # self-loop layout for node 0 is (0,0), (0,1)
    assert s.value[1, 0] == 5.0
    z = ad.edge_scores(xw, t.leaf(np.zeros((2, 1))), g)
    assert not z.value.any()


def test_edge_scores_dense_oracle():
    g = dense_graph(5, 6)
    r = Rng(5)
    h, a = r.normal(size=(6, 3)), r.normal(size=(6, 1))
    t = ad.Tape()
    s = ad.edge_scores(t.leaf(h), t.leaf(a), g, 0.2).value[:, 0]
    ip, ix = g.self_loop_csr
    k = 0
    for i in range(6):
        for j in ix[ip[i]:ip[i + 1]]:
            pre = a[:3, 0] @ h[i] + a[3:, 0] @ h[j]
            assert s[k] == pytest.approx(pre if pre > 0 else 0.2 * pre, abs=1e-12)
            k += 1


def test_softmax_examples():
    g = path_graph(2)
    t = ad.Tape()
    w = ad.neighbor_softmax(t.leaf(np.zeros((4, 1))), g)
    np.testing.assert_allclose(w.value[:, 0], 0.5)
    w = ad.neighbor_softmax(t.leaf([[0.0], [np.log(3.0)], [1.0], [1.0]]), g)
    np.testing.assert_allclose(w.value[:2, 0], [0.25, 0.75], atol=1e-15)


def test_softmax_rows_sum_to_one():
    g = dense_graph(6, 10)
    ip, _ = g.self_loop_csr
    t = ad.Tape()
    w = ad.neighbor_softmax(t.leaf(Rng(6).normal(size=(int(ip[-1]), 1)) * 10), g).value[:, 0]
    sums = np.add.reduceat(w, ip[:-1])
    np.testing.assert_allclose(sums, 1.0, atol=1e-12)


def test_attn_aggregate_examples():
    g = path_graph(2)
    ip, ix = g.self_loop_csr
    t = ad.Tape()
    xw = t.leaf([[1.0, 2.0], [5.0, 6.0]])
    selfonly = np.where(ix == np.repeat(np.arange(2), np.diff(ip)), 1.0, 0.0)[:, None]
    np.testing.assert_array_equal(ad.attn_aggregate(t.leaf(selfonly), xw, g).value, xw.value)
    uni = ad.attn_aggregate(t.leaf(np.full((4, 1), 0.5)), xw, g)
    np.testing.assert_allclose(uni.value, [[3.0, 4.0], [3.0, 4.0]])


def test_attention_pipeline_dense_oracle_and_fd():
    g = dense_graph(7, 6)
    r = Rng(7)
    x, w, a = r.normal(size=(6, 2)), r.normal(size=(2, 2)), r.normal(size=(4, 1))

    def build(xv, wv, av):
        xw = ad.matmul(xv, wv)
        alpha = ad.neighbor_softmax(ad.edge_scores(xw, av, g), g)
        out = ad.attn_aggregate(alpha, xw, g)
        return ad.hadamard(out, out)

    t = ad.Tape()
    xw = t.leaf(x @ w)
    alpha = ad.neighbor_softmax(ad.edge_scores(xw, t.leaf(a), g), g)
    out = ad.attn_aggregate(alpha, xw, g).value
    ip, ix = g.self_loop_csr
    dense = np.zeros((6, 6))
    dense[np.repeat(np.arange(6), np.diff(ip)), ix] = alpha.value[:, 0]
    np.testing.assert_allclose(out, dense @ (x @ w), atol=1e-12)
    _fd_check(build, [x, w, a], tol=1e-5)


def test_sum_of_linear_map():
    r = Rng(8)
    w, x = r.normal(size=(3, 2)), r.normal(size=(2, 4))
    gw, gx = _grad(lambda a, b: ad.matmul(a, b), w, x)
    np.testing.assert_allclose(gw, np.ones((3, 4)) @ x.T)
    np.testing.assert_allclose(gx, w.T @ np.ones((3, 4)))


def test_constant_has_zero_gradient():
    t = ad.Tape()
    x = t.leaf(np.ones((2, 2)))
    c = ad.constant(t, np.full((1, 1), 3.0))
    t.backward(c)
    assert not t.grad(x).any()


def test_shape_errors():
    t = ad.Tape()
    with pytest.raises(ad.ShapeError):
        ad.add(t.leaf(np.ones((2, 2))), t.leaf(np.ones((2, 3))))
    with pytest.raises(ad.ShapeError):
        ad.matmul(t.leaf(np.ones((2, 2))), t.leaf(np.ones((3, 1))))
    with pytest.raises(ad.ShapeError):
        t.backward(t.leaf(np.ones((2, 1))))
    with pytest.raises(ValueError):
        ad.add(t.leaf(np.ones((1, 1))), ad.Tape().leaf(np.ones((1, 1))))


def test_gradients_accumulate_over_reuse():
    t = ad.Tape()
    x = t.leaf([[3.0]])
    t.backward(ad.add(ad.hadamard(x, x), ad.scale(x, 2.0)))
    assert t.grad(x)[0, 0] == 8.0
