import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid
from scipy.stats import multivariate_normal

from cfi.flow import ConditionalFlow, CouplingBlock, evaluate_graph, export_graph, half_split_masks
from cfi.nnet import ConfigurationError, DenseLayer, Mlp

from conftest import random_flow

S0 = math.log(2.0) + 0.001


def zero_block(bias=(0.0, 0.0), context_dim=0):
    net = Mlp([DenseLayer(np.zeros((2, 1 + context_dim)), bias)])
    return CouplingBlock([0], [1], net, context_dim)


def test_zero_conditioner_forward():
    out, logdet = zero_block().forward(np.array([[1.0, 2.0]]), np.zeros((1, 0)))
    np.testing.assert_allclose(out[0], [1.0, 2.0 * S0], atol=1e-12)
    assert out[0, 1] == pytest.approx(1.388294, abs=1e-6)
    assert logdet[0] == pytest.approx(-0.36507, abs=1e-5)
    assert S0 == pytest.approx(0.694147, abs=1e-6)


def test_zero_conditioner_inverse():
    l, logdet = zero_block().inverse(np.array([[1.0, 2.0 * S0]]), np.zeros((1, 0)))
    np.testing.assert_allclose(l[0], [1.0, 2.0], atol=1e-12)
    assert logdet[0] == pytest.approx(-math.log(S0), abs=1e-12)


def test_scale_clips_at_three():
    block = zero_block(bias=(0.0, 50.0))
    out, logdet = block.forward(np.array([[0.4, -1.3]]), np.zeros((1, 0)))
    np.testing.assert_allclose(out[0], [0.4, -3.9])
    assert logdet[0] == pytest.approx(math.log(3.0))


def test_transformed_equal_to_shift_inverts_to_zero():
    block = zero_block(bias=(0.8, 0.0))  # t = 0.8
    l, _ = block.inverse(np.array([[0.3, 0.8]]), np.zeros((1, 0)))
    assert l[0, 1] == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(-5, 5))
def test_kept_coordinate_passes_through(seed, value):
    flow = random_flow(k=3, m=2, n_blocks=1, seed=seed, weight_scale=3.0)
    b = flow.blocks[0]
    l = np.random.default_rng(seed).standard_normal((1, 3))
    l[0, b.keep_idx[0]] = value
    out, _ = b.forward(l, np.ones((1, 2)))
    assert out[0, b.keep_idx[0]] == value


def test_zero_block_flow_prescaling():
    flow = ConditionalFlow(2, 0, [], shift=[-0.5, -0.5], scale=6.0)
    np.testing.assert_allclose(flow.forward([3.0, -3.0]), [1.0, 0.0])
    np.testing.assert_allclose(flow.forward([0.0, 0.0]), [0.5, 0.5])


def test_zero_block_log_prob():
    flow = ConditionalFlow(2, 0, [])
    assert flow.log_prob([0.0, 0.0]) == pytest.approx(-math.log(2 * math.pi), abs=1e-12)
    assert flow.log_prob([0.0, 0.0]) == pytest.approx(-1.837877, abs=1e-6)
    scaled = ConditionalFlow(2, 0, [], shift=[-0.5, -0.5], scale=6.0)
    y = np.array([[0.2, 0.9], [0.5, 0.5], [1.1, -0.3]])
    oracle = multivariate_normal(np.zeros(2), np.eye(2)).logpdf(6 * y - 3) + 2 * math.log(6)
    np.testing.assert_allclose(scaled.log_prob(y), oracle, atol=1e-12)


def test_round_trip_thousand_points():
    rng = np.random.default_rng(0)
    worst = 0.0
    for seed in range(5):
        flow = random_flow(k=3, m=2, n_blocks=4, seed=seed, weight_scale=2.0, shift=[0.1, -0.2, 0.3], scale=2.5)
        l = rng.standard_normal((200, 3)) * 2
        c = rng.standard_normal((200, 2))
        worst = max(worst, np.max(np.abs(flow.inverse(flow.forward(l, c), c) - l)))
    assert worst < 1e-8


def test_trained_flow_round_trip(moons_flow):
    rng = np.random.default_rng(1)
    l = rng.standard_normal((1000, 2))
    c = rng.integers(0, 2, (1000, 1)).astype(float)
    assert np.max(np.abs(moons_flow.inverse(moons_flow.forward(l, c), c) - l)) < 1e-8


def _fd_logdet(flow, l, c, h=1e-5):
    J = np.empty((2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        J[:, j] = (flow.forward(l + e, c) - flow.forward(l - e, c)) / (2 * h)
    return math.log(abs(np.linalg.det(J)))


def test_logdet_matches_finite_difference_jacobian():
    rng = np.random.default_rng(4)
    flow = random_flow(k=2, m=1, n_blocks=4, seed=4, scale=1.7, shift=[0.3, -0.1])
    worst = 0.0
    for _ in range(100):
        l, c = rng.standard_normal(2), rng.standard_normal(1)
        _, ld = flow.forward(l, c, return_logdet=True)
        fd = _fd_logdet(flow, l, c)
        worst = max(worst, abs(ld - fd) / max(1.0, abs(fd)))
    assert worst < 1e-4


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_logdet_antisymmetry(seed):
    flow = random_flow(k=3, m=1, n_blocks=3, seed=seed, weight_scale=2.0, scale=3.0)
    rng = np.random.default_rng(seed)
    l, c = rng.standard_normal((5, 3)), rng.standard_normal((5, 1))
    y, ld_f = flow.forward(l, c, return_logdet=True)
    _, ld_i = flow.inverse(y, c, return_logdet=True)
    np.testing.assert_allclose(ld_f, -ld_i, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 20))
def test_scales_within_bounds(seed, wscale):
    flow = random_flow(k=4, m=2, n_blocks=2, seed=seed, weight_scale=wscale)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((50, 4)) * 5
    c = rng.standard_normal((50, 2)) * 5
    for b in flow.blocks:
        s, *_ = b.scale_shift(z[:, b.keep_idx], c)
        assert np.all(s > 0) and np.all(s <= 3.0)


@pytest.mark.parametrize("k", [2, 3, 4, 5])
def test_masks_alternate(k):
    flow = random_flow(k=k, m=0, n_blocks=4)
    for a, b in zip(flow.blocks, flow.blocks[1:]):
        assert sorted(a.keep_idx) == sorted(b.transform_idx)
    keep, tr = half_split_masks(k, 0)
    assert list(keep) == list(range((k + 1) // 2))


def test_trained_density_integrates_to_one(moons_flow):
    xs = np.linspace(-8, 8, 801)
    X, Y = np.meshgrid(xs, xs)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    for c in (0.0, 1.0):
        dens = np.exp(moons_flow.log_prob(pts, [c])).reshape(X.shape)
        assert trapezoid(trapezoid(dens, xs), xs) == pytest.approx(1.0, abs=0.01)


def test_sample():
    flow = ConditionalFlow(2, 0, [], shift=[-0.5, -0.5], scale=6.0)
    assert flow.sample(0, rng=0).shape == (0, 2)
    s = flow.sample(100_000, rng=0)
    np.testing.assert_allclose(s.mean(axis=0), [0.5, 0.5], atol=0.01)
    f = random_flow()
    np.testing.assert_array_equal(f.sample(50, [1.0], rng=7), f.sample(50, [1.0], rng=7))
    with pytest.raises(ValueError):
        f.sample(-1, [0.0])


def test_export_zero_block_graph():
    g = export_graph(ConditionalFlow(2, 0, [], shift=[-0.5, -0.5], scale=6.0))
    assert [n["op"] for n in g["nodes"]] == ["affine"]
    np.testing.assert_allclose(evaluate_graph(g, [[3.0, -3.0]]), [[1.0, 0.0]])


def test_export_node_count_one_block():
    g = export_graph(random_flow(n_blocks=1))
    ops = [n["op"] for n in g["nodes"]]
    assert len(ops) == 2 + 2 + 1 + 1 + 1 + 1 + 1 + 1 + 1 + 1
    assert ops.count("relu") == 1 and ops.count("scatter") == 1 and ops[-1] == "affine"


def test_graph_evaluation_matches_forward():
    flow = random_flow(k=3, m=2, n_blocks=4, layers=2, seed=9, weight_scale=2.0, shift=[0.5, 0, -1], scale=4.0)
    rng = np.random.default_rng(9)
    l, c = rng.standard_normal((100, 3)), rng.standard_normal((100, 2))
    graph = json.loads(json.dumps(export_graph(flow)))
    np.testing.assert_allclose(evaluate_graph(graph, l, c), flow.forward(l, c), atol=1e-10, rtol=0)


def test_save_load_round_trip(tmp_path):
    flow = random_flow(k=3, m=2, shift=[0.1, 0.2, 0.3], scale=2.0)
    flow.save(tmp_path / "m.json")
    d = json.loads((tmp_path / "m.json").read_text())
    assert d["version"] == 1 and d["blocks"][0]["clip"] == [0.0, 3.0]
    back = ConditionalFlow.load(tmp_path / "m.json")
    l = np.random.default_rng(0).standard_normal((10, 3))
    np.testing.assert_array_equal(back.forward(l, [1.0, 2.0]), flow.forward(l, [1.0, 2.0]))


def test_dimension_errors():
    flow = random_flow(k=2, m=1)
    with pytest.raises(ConfigurationError):
        flow.forward(np.zeros(3), [0.0])
    with pytest.raises(ConfigurationError):
        flow.inverse(np.zeros(2), [0.0, 1.0])
    # a conditional flow must not silently run on a missing context
    with pytest.raises(ConfigurationError):
        flow.forward(np.zeros(2), None)
    bad = {**flow.to_dict(), "version": 99}
    with pytest.raises(ConfigurationError):
        ConditionalFlow.from_dict(bad)
