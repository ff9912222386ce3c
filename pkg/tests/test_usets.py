import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2

from cfi.data import Dataset
from cfi.flow import ConditionalFlow
from cfi.usets import (HypercubeSet, LatentBall, analytical_coverage, chi2_cdf, cube_center, empirical_coverage,
                       membership, regularized_lower_gamma, write_coverage_report)


def test_chi2_examples():
    assert chi2_cdf(2, 5.991) == pytest.approx(0.95, abs=5e-4)
    assert chi2_cdf(2, 0.0) == 0.0
    assert chi2_cdf(2, 3.12) == pytest.approx(0.790, abs=1e-3)
    assert chi2_cdf(2, 2.84) == pytest.approx(0.758, abs=1e-3)
    assert analytical_coverage(3, 0.0) == 0.0
    assert analytical_coverage(2, 50.0) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        chi2_cdf(2, -1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 50))
def test_chi2_two_dof_closed_form(x):
    assert chi2_cdf(2, x) == pytest.approx(1 - math.exp(-x / 2), abs=1e-10)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 12), st.floats(0, 200))
def test_chi2_matches_scipy(k, x):
    assert chi2_cdf(k, x) == pytest.approx(chi2.cdf(x, k), abs=1e-11)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.floats(0, 60), st.floats(0, 10))
def test_chi2_monotone(k, x, dx):
    assert chi2_cdf(k, x + dx) >= chi2_cdf(k, x) - 1e-15


def test_gamma_both_branches():
    from scipy.special import gammainc

    for a, x in [(0.5, 0.2), (1.5, 2.0), (3.0, 10.0), (5.0, 4.0)]:
        assert regularized_lower_gamma(a, x) == pytest.approx(gammainc(a, x), abs=1e-12)


def test_membership_examples():
    ball = LatentBall(1.0, ConditionalFlow(2, 0, []))
    member, slack = membership(ball, np.array([0.0, 0.0]))
    assert member and slack == pytest.approx(1.0)
    cube = HypercubeSet([0.0, 0.0], 1.0)
    member, slack = membership(cube, np.array([1.0, -1.0]))
    assert member and slack == 0.0
    member, slack = membership(cube, np.array([1.2, 0.0]))
    assert not member and slack == pytest.approx(-0.2)
    with pytest.raises(ValueError):
        HypercubeSet([0.0], -1.0)


def test_empirical_coverage_examples():
    ds = Dataset(np.zeros((10, 2)), np.zeros((10, 0)))
    assert empirical_coverage(HypercubeSet([0.0, 0.0], 0.0), ds) == 1.0
    rng = np.random.default_rng(0)
    cont = Dataset(rng.standard_normal((1000, 2)), np.zeros((1000, 0)))
    assert empirical_coverage(LatentBall(0.0, ConditionalFlow(2, 0, [])), cont) == 0.0
    with pytest.raises(ValueError):
        empirical_coverage(HypercubeSet([0.0], 1.0), np.zeros((0, 1)))


def test_zero_block_ball_coverage_matches_chi2():
    rng = np.random.default_rng(1)
    flow = ConditionalFlow(2, 0, [], shift=[-0.5, -0.5], scale=6.0)
    y = flow.sample(200_000, rng=rng)
    for delta in (0.5, 2.0, 5.991):
        assert empirical_coverage(LatentBall(delta, flow), y) == pytest.approx(chi2.cdf(delta, 2), abs=5e-3)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 5), st.floats(0, 5), st.integers(0, 1000))
def test_sets_nest(d1, d2, seed):
    lo, hi = min(d1, d2), max(d1, d2)
    y = np.random.default_rng(seed).standard_normal((200, 2)) * 2
    flow = ConditionalFlow(2, 0, [])
    for make in (lambda d: LatentBall(d, flow), lambda d: HypercubeSet([0.1, -0.2], d)):
        small, _ = membership(make(lo), y)
        big, _ = membership(make(hi), y)
        assert np.all(big[small])
    assert analytical_coverage(2, hi) >= analytical_coverage(2, lo)


def test_trained_flow_coverage_close_to_analytical(moons_flow):
    from cfi.data import gen_two_moons

    test = gen_two_moons(20_000, rng=77)
    for c in (0.0, 1.0):
        sub = test.where_context([c])
        for delta in (1.0, 3.0):
            emp = empirical_coverage(LatentBall(delta, moons_flow), sub, [c])
            assert abs(emp - analytical_coverage(2, delta)) < 0.05


def test_cube_center_and_report(tmp_path):
    ds = Dataset(np.array([[0.0, 0.0], [2.0, 2.0], [10.0, 10.0]]), np.array([[0.0], [0.0], [1.0]]))
    np.testing.assert_allclose(cube_center(ds, [0.0]), [1.0, 1.0])
    np.testing.assert_allclose(cube_center(ds), [4.0, 4.0])
    with pytest.raises(ValueError):
        cube_center(ds, [5.0])
    write_coverage_report([{"set_id": "a", "delta": 1.0 / 3, "analytical": 0.5, "empirical": 0.25, "n": 4}],
                          tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines == ["set_id,delta,analytical,empirical,n", "a,0.333333333,0.5,0.25,4"]
