import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from linkhe.graph import build_graph
from linkhe.nn import (
    Adam,
    Combine,
    Init,
    Mlp,
    Param,
    bce_loss,
    clip_grad_norm,
    combine,
    combine_backward,
    dropout,
    gcn_forward,
    init_params,
    lr_decay,
    mean_aggregate,
    mlp_forward,
)
from linkhe.oracle import dense_adjacency
from linkhe.synthetic import erdos_renyi


def star_with_values(values, self_value=0.0):
    """Node 0 linked to one leaf per value; features are the values."""
    n = len(values) + 1
    g = build_graph([(0, i) for i in range(1, n)], n)
    h = np.array([[self_value]] + [[float(v)] for v in values])
    return g, h


def test_isolated_node_keeps_its_row():
    g = build_graph([], 1)
    h = np.array([[0.3, -2.0, 5.0]])
    out, _ = gcn_forward(g, h, np.eye(3))
    assert np.array_equal(out, h)


def test_gcn_matches_dense_formula():
    rng = np.random.default_rng(0)
    for _ in range(5):
        g = erdos_renyi(15, 0.3, rng)
        h = rng.normal(size=(15, 4))
        w = rng.normal(size=(4, 3))
        a = dense_adjacency(g) + np.eye(15)
        ref = np.diag(1 / a.sum(axis=1)) @ a @ h @ w
        out, _ = gcn_forward(g, h, w)
        np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12)
    with pytest.raises(ValueError):
        gcn_forward(g, h, np.zeros((5, 3)))


def test_mean_hides_multiset_difference():
    g1, h1 = star_with_values([10, 3, 2, 1])
    g2, h2 = star_with_values([4, 6, 4, 3, 3])
    a = mean_aggregate(g1, h1, include_self=False)[0]
    b = mean_aggregate(g2, h2, include_self=False)[0]
    assert a[0] == b[0] == 4.0
    g1, h1 = star_with_values([10, 3, 2, 1], self_value=4.0)
    g2, h2 = star_with_values([4, 6, 4, 3, 3], self_value=4.0)
    assert mean_aggregate(g1, h1)[0, 0] == mean_aggregate(g2, h2)[0, 0] == 4.0


def test_neighbour_storage_order_does_not_matter():
    rng = np.random.default_rng(1)
    g = erdos_renyi(20, 0.3, rng)
    edges = g.edges()
    perm = rng.permutation(len(edges))
    g2 = build_graph(edges[perm][:, ::-1], 20)
    h = rng.normal(size=(20, 5))
    w = rng.normal(size=(5, 2))
    assert np.array_equal(gcn_forward(g, h, w)[0], gcn_forward(g2, h, w)[0])


def test_combine():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    assert np.array_equal(combine(a, np.ones_like(a)), a)
    assert np.array_equal(combine(a, b), combine(b, a))
    assert combine(a, b, Combine.CONCAT).shape == (3, 8)
    ga, gb = combine_backward(a, b, np.ones((3, 8)), Combine.CONCAT)
    assert ga.shape == gb.shape == (3, 4)


def test_bce_values():
    loss, grad = bce_loss(np.array([0.0]), np.array([1.0]))
    assert loss == pytest.approx(math.log(2), abs=1e-12)
    assert grad[0] == pytest.approx(-0.5)
    loss, grad = bce_loss(np.array([40.0, -40.0]), np.array([1.0, 0.0]))
    assert loss < 1e-15 and np.all(np.abs(grad) < 1e-15)
    loss, _ = bce_loss(np.array([800.0]), np.array([0.0]))
    assert loss == pytest.approx(800.0)


def test_mlp_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    mlp = Mlp("m", [5, 6, 4, 1], rng)
    x = rng.normal(size=(7, 5))
    y = (rng.random(7) < 0.5).astype(float)

    def loss():
        return bce_loss(mlp_forward(mlp, x)[0], y)[0]

    logits, cache = mlp_forward(mlp, x)
    _, grad = bce_loss(logits, y)
    gx = mlp.backward(cache, grad)
    for p in mlp.params():
        num = np.zeros_like(p.value)
        for i in np.ndindex(p.value.shape):
            old = p.value[i]
            p.value[i] = old + 1e-6
            up = loss()
            p.value[i] = old - 1e-6
            down = loss()
            p.value[i] = old
            num[i] = (up - down) / 2e-6
        np.testing.assert_allclose(p.grad, num, rtol=1e-5, atol=1e-9)
    assert gx.shape == x.shape


def test_dropout_identity_cases(rng):
    x = rng.normal(size=(4, 3))
    assert dropout(x, 0.0, rng, True)[0] is x
    assert dropout(x, 0.7, rng, False)[0] is x
    y, mask = dropout(x, 0.5, rng, True)
    assert set(np.unique(mask)) <= {0.0, 2.0}
    np.testing.assert_array_equal(y, x * mask)


def test_xavier_and_he_variance(rng):
    w = init_params((400, 300), Init.XAVIER, rng)
    assert w.var() == pytest.approx(2 / 700, rel=0.1)
    w = init_params((400, 300), Init.HE, rng)
    assert w.var() == pytest.approx(2 / 400, rel=0.1)


def test_adam_zero_grad_is_noop():
    p = Param("w", np.arange(6.0).reshape(2, 3))
    q = Param("e", np.ones((4, 2)), row_sparse=True)
    before = (p.value.copy(), q.value.copy())
    Adam().step([p, q], 0.1)
    assert np.array_equal(p.value, before[0]) and np.array_equal(q.value, before[1])


def test_adam_first_step_and_lazy_rows():
    p = Param("w", np.zeros(3))
    p.grad[:] = [1.0, -2.0, 0.0]
    opt = Adam()
    opt.step([p], 0.01)
    # bias-corrected first step moves each coordinate by lr * sign(g)
    np.testing.assert_allclose(p.value, [-0.01, 0.01, 0.0], atol=1e-9)

    q = Param("e", np.zeros((3, 2)), row_sparse=True)
    q.grad[1] = 1.0
    opt.step([q], 0.01)
    q.zero_grad()
    q.grad[2] = 1.0
    opt.step([q], 0.01)
    assert np.all(q.value[0] == 0.0)
    # row 2 gets a fresh first step, not a second-step correction
    np.testing.assert_allclose(q.value[2], [-0.01, -0.01], atol=1e-9)
    assert opt.t["e"].tolist() == [0, 1, 1]


def test_lr_decay():
    assert [lr_decay(0.1, 1.0, e) for e in range(3)] == [0.1] * 3
    assert lr_decay(0.1, 0.5, 2) == pytest.approx(0.025)


def test_clip_grad_norm():
    a, b = Param("a", np.zeros(2)), Param("b", np.zeros(2))
    a.grad[:] = [12.0, 0.0]
    b.grad[:] = [0.0, 16.0]
    assert clip_grad_norm([a, b], 5.0) == pytest.approx(20.0)
    np.testing.assert_allclose(np.concatenate([a.grad, b.grad]), [3.0, 0.0, 0.0, 4.0])
    assert clip_grad_norm([a, b], 10.0) == pytest.approx(5.0)
    np.testing.assert_allclose(a.grad, [3.0, 0.0])


@given(st.lists(st.integers(-50, 50), min_size=1, max_size=12), st.integers(1, 12), st.integers(0, 2**31))
def test_equal_mean_multisets_aggregate_identically(base, size, seed):
    """Any two integer multisets with the same mean aggregate to the same value."""
    rng = np.random.default_rng(seed)
    mean = sum(base) // len(base)
    other = list(rng.integers(-50, 50, size=size))
    other.append(mean * (size + 1) - sum(other))
    first = [v - (sum(base) - mean * len(base)) if i == 0 else v for i, v in enumerate(base)]
    g1, h1 = star_with_values(first)
    g2, h2 = star_with_values(other)
    assert sum(first) / len(first) == sum(other) / len(other) == mean
    assert mean_aggregate(g1, h1, include_self=False)[0, 0] == mean_aggregate(g2, h2, include_self=False)[0, 0]
