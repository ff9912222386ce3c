import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfi.data import gen_synthetic_cf, gen_two_moons
from cfi.experiments import fit_context_flows, sip_config
from cfi.flow import ConditionalFlow
from cfi.grid import GridModel, Line, Schedule, batch_constraint_g, german_3bus
from cfi.sip import (BALL, CUBE, LowerConfig, ScucConstraint, SipConfig, SipProblem, annulus_g, benchmark_schedules,
                     blankenship_falk, certify, design_free, himmelblau_g, himmelblau_squared_g, lower_level_solve,
                     nelder_mead_batch, solve_cfi, solve_hypercube, upper_level_fixed_design, upper_level_scuc,
                     write_benchmark)
from cfi.usets import HypercubeSet, cube_center, empirical_coverage

CFG = sip_config("two-moons")


def const(v):
    return lambda y: np.full(np.atleast_2d(y).shape[0], float(v))


# -- constraints -----------------------------------------------------------

def test_himmelblau_at_origin():
    assert float(himmelblau_g(np.array([0.0, 0.0]))) == pytest.approx(-144.290, abs=1e-3)


def test_himmelblau_far_field_and_bounded_region():
    assert himmelblau_g(np.array([0.0, 1e3])) < -1e10
    xs = np.linspace(-10, 10, 2001)
    X, Y = np.meshgrid(xs, xs)
    g = himmelblau_g(np.stack([X, Y], axis=-1))
    edge = np.concatenate([g[0], g[-1], g[:, 0], g[:, -1]])
    assert np.all(edge < 0)
    # h >= 0 with zeros, so the largest grid value sits just below 10
    assert 10 - 0.2 < g.max() <= 10.0
    gs = himmelblau_squared_g(np.stack([X, Y], axis=-1))
    assert 10 - 0.2 < gs.max() <= 10.0


def test_annulus_examples():
    np.testing.assert_allclose(annulus_g(np.array([[0.5, 0.0], [1.0, 0.0], [0.0, 0.0]])), [0.0, -0.75, 0.25])


# -- lower level -----------------------------------------------------------

def _ball(g, k=2, cfg=None, flow=None, context=None):
    flow = flow or ConditionalFlow(k, 0, [])
    return SipProblem(design_free(g), k, BALL, flow, context, config=cfg or SipConfig())


def test_lower_level_constant_constraints():
    r = lower_level_solve(_ball(const(-1.0)), None, 1.0)
    assert r.value == pytest.approx(-1.0)
    r = lower_level_solve(_ball(const(1.0)), None, 1.0)
    assert r.value == pytest.approx(1.0)
    np.testing.assert_allclose(r.u, 0.0)  # center wins the tie on measure


def test_lower_level_rejects_bad_input():
    with pytest.raises(ValueError):
        lower_level_solve(_ball(const(1.0)), None, -1.0)
    with pytest.raises(ValueError):
        LowerConfig(max_evals=0)


def test_lower_level_finds_boundary_violation():
    # violated only where y1 > 1.5: the maximizer of min(g, delta - |l|^2) sits on that line
    prob = _ball(lambda y: np.atleast_2d(y)[:, 0] - 1.5)
    r = lower_level_solve(prob, None, 4.0)
    t = (-1 + np.sqrt(23.0)) / 2  # root of t - 1.5 = 4 - t^2
    oracle = t - 1.5
    assert r.value == pytest.approx(oracle, abs=1e-6)


def test_nelder_mead_minimizes_quadratic():
    x0 = np.array([[3.0, -2.0], [0.5, 0.5]])
    x, f, _ = nelder_mead_batch(lambda u: np.sum((u - [1.0, 2.0]) ** 2, axis=1), x0, 0.5, 400)
    np.testing.assert_allclose(x, [[1.0, 2.0], [1.0, 2.0]], atol=1e-4)


# -- upper levels ------------------------------------------------------------

def test_upper_fixed_design_examples():
    assert upper_level_fixed_design([4.0, 2.5, 9.0], 25.0, 1.0, 0.0) == 2.5
    assert upper_level_fixed_design([], 25.0, 1.0, 0.0) == 25.0
    assert upper_level_fixed_design([2.0], 25.0, 500.0, 25.0) == pytest.approx(2.05)


def test_upper_scuc_without_cuts_returns_delta_max():
    grid = german_3bus()
    res = upper_level_scuc(grid, ScucConstraint(grid), np.zeros((0, 3)), [], 25.0, 500.0, 25.0,
                           sip_config("scuc").upper)
    assert res.delta == 25.0
    assert np.all((res.x >= 0) & (res.x <= grid.conv_capacity))


def test_upper_scuc_cut_infeasible_for_every_design():
    grid = german_3bus()
    cut = np.ones((1, 3))  # full renewables overshoot demand even with every unit at zero
    assert np.all(batch_constraint_g(grid, np.zeros(3), cut * grid.ren_capacity) > 25.0)
    res = upper_level_scuc(grid, ScucConstraint(grid), cut, [1.3], 25.0, 500.0, 25.0,
                           sip_config("scuc").upper, tol_up=25.0)
    assert res.delta == pytest.approx(1.3 + 25.0 / 500.0)


# -- outer loop --------------------------------------------------------------

def test_constant_feasible_converges_at_delta_max():
    res = solve_cfi(ConditionalFlow(2, 0, []), const(-1.0), None, CFG)
    assert res.delta == CFG.delta_max and res.converged
    assert len(res.state.iterations) == 1 and not res.state.scenarios


def test_center_infeasible_gives_tiny_set():
    res = solve_hypercube([0.0, 0.0], const(1.0), CFG)
    assert res.center_infeasible and res.delta <= CFG.tol_feas / CFG.alpha
    # no set, however small, is feasible here, so the result must not claim convergence
    assert not res.converged


@pytest.mark.parametrize("half", [2.0, 0.7])
def test_hypercube_geometry(half):
    cfg = SipConfig(alpha=1.0, tol_feas=1e-9, cert_margin=1e-9)
    res = solve_hypercube([0.0, 0.0], lambda y: np.max(np.abs(np.atleast_2d(y)), axis=1) - half, cfg)
    assert res.delta == pytest.approx(half, abs=1e-6)


def _moons_problem(flow, c):
    return SipProblem(design_free(himmelblau_squared_g), 2, BALL, flow, np.array([c]), config=CFG)


@pytest.mark.parametrize("c", [0.0, 1.0])
def test_two_moons_solve(moons_flow, c):
    res = solve_cfi(moons_flow, himmelblau_squared_g, [c], CFG)
    st_ = res.state
    assert res.converged and len(st_.iterations) <= 15
    assert len(st_.scenarios) == len(st_.iterations) - 1
    d = st_.delta_history
    assert all(b <= a for a, b in zip(d, d[1:]))
    assert all(s.ll_value > CFG.tol_feas for s in st_.scenarios if s.kind == "bf")
    final = lower_level_solve(_moons_problem(moons_flow, c), None, res.delta)
    assert final.value <= CFG.tol_feas + CFG.cert_margin
    max_g, _ = certify(_moons_problem(moons_flow, c), None, res.delta, 10_000, seed=12345)
    assert max_g <= CFG.tol_feas + CFG.cert_margin
    assert res.analytical_coverage == pytest.approx(1 - np.exp(-res.delta / 2))
    again = solve_cfi(moons_flow, himmelblau_squared_g, [c], CFG)
    assert again.delta == res.delta


def test_two_moons_mean_centered_cubes():
    train = gen_two_moons(20_000, rng=0)
    test = gen_two_moons(20_000, rng=1)
    covs = {}
    for c, ref in ((0.0, 0.40), (1.0, 0.52)):
        res = solve_hypercube(cube_center(train, [c]), himmelblau_squared_g, CFG)
        covs[c] = empirical_coverage(HypercubeSet(res.center, res.delta), test.where_context([c]))
        assert abs(covs[c] - ref) <= 0.08


@settings(max_examples=12, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.3, 2.0), st.floats(0.01, 0.3), st.floats(0.0, 0.3))
def test_bf_properties_on_random_disks(cx, cy, r, tol, extra):
    """A disk-shaped infeasible pocket; delta history shrinks and a looser tolerance never shrinks delta."""
    def g(y):
        y = np.atleast_2d(y)
        return r * r - ((y[:, 0] - cx) ** 2 + (y[:, 1] - cy) ** 2)

    flow = ConditionalFlow(2, 0, [])
    small = SipConfig(tol_feas=tol, lower=LowerConfig(n_starts=8, grid_points=101))
    loose = SipConfig(tol_feas=tol + extra, lower=LowerConfig(n_starts=8, grid_points=101))
    a = blankenship_falk(SipProblem(design_free(g), 2, BALL, flow, config=small))
    b = blankenship_falk(SipProblem(design_free(g), 2, BALL, flow, config=loose))
    for res in (a, b):
        d = res.state.delta_history
        assert all(y <= x for x, y in zip(d, d[1:]))
    assert b.delta >= a.delta - 1e-6


# -- dispatch -----------------------------------------------------------------

@pytest.fixture(scope="module")
def scuc_setup():
    table = gen_synthetic_cf(20, rng=0)
    flows = fit_context_flows(table, 19, ["PREV_TD"], seed=0, max_epochs=60)
    return table, flows["PREV_TD"]


def test_scuc_flow_solve(scuc_setup):
    from cfi.data import build_contexts

    table, flow = scuc_setup
    grid = german_3bus()
    ds = build_contexts(table, "PREV_TD")
    cfg = sip_config("scuc", "flow")
    res = solve_cfi(flow, None, ds.contexts[24 * 19 + 10], cfg, grid=grid)
    assert res.converged and res.delta > 0
    d = res.state.delta_history
    assert all(b <= a for a, b in zip(d, d[1:]))
    prob = SipProblem(ScucConstraint(grid), 3, BALL, flow, ds.contexts[24 * 19 + 10], config=cfg)
    max_g, _ = certify(prob, res.schedule.p_set, res.delta, 10_000, seed=999)
    assert max_g <= cfg.tol_feas + cfg.cert_margin
    # the binding realizations are aggregate-balance violations, not line overloads
    cuts = res.state.cut_data
    _, parts = batch_constraint_g(grid, res.schedule.p_set, np.maximum(cuts, 0) * grid.ren_capacity, with_parts=True)
    assert np.all(parts["line"] <= cfg.tol_feas)
    g_final = np.maximum(np.maximum(parts["over"], parts["under"]), parts["line"])
    violated = g_final > cfg.tol_feas
    assert violated.any()
    assert np.all(np.maximum(parts["over"], parts["under"])[violated] > cfg.tol_feas)
    # each cut violated the constraint for the setpoints in force when it was added
    assert all(s.g > cfg.tol_feas for s in res.state.scenarios)


def test_scuc_cube_solve_respects_box():
    grid = german_3bus()
    cfg = sip_config("scuc", "cube")
    res = solve_hypercube([0.3, 0.2, 0.25], None, cfg, grid=grid)
    assert res.converged and 0 < res.delta < 1
    assert np.all(res.state.cut_data >= 0) and np.all(res.state.cut_data <= 1)


def test_two_bus_line_capacity_is_not_binding():
    grid = GridModel([Line(0, 1, 1000.0, 5000.0)], [3000.0, 3000.0], [2000.0, 2000.0], [2500.0, 2500.0])
    cfg = sip_config("scuc", "cube")
    res = solve_hypercube([0.5, 0.5], None, cfg, grid=grid)
    _, parts = batch_constraint_g(grid, res.schedule.p_set, res.state.cut_data * grid.ren_capacity, with_parts=True)
    assert np.all(parts["line"] < 0)


# -- benchmark -------------------------------------------------------------

def test_benchmark_examples(tmp_path):
    grid = german_3bus()
    table = gen_synthetic_cf(2, rng=0)
    hours = table.hours
    base = np.tile(grid.participation * grid.demand.sum() * 0.6, (len(table), 1))
    report = benchmark_schedules(grid, {"A": base, "B": base.copy(), "zero": np.zeros_like(base)},
                                 table.cf, hours, 25.0)
    np.testing.assert_array_equal(report.dpset_by_hour[("A", "B")], 0.0)
    np.testing.assert_array_equal(report.share_by_hour["A"], report.share_by_hour["B"])
    big = grid.with_demand(grid.demand * 10)
    r0 = benchmark_schedules(big, {"zero": np.zeros_like(base)}, table.cf, hours, 25.0)
    assert r0.share["zero"] == 0.0 and r0.causes["zero"]["underproduction"] == 1.0
    write_benchmark(report, tmp_path / "b.csv")
    rows = (tmp_path / "b.csv").read_text().splitlines()
    assert [r.split(",")[0] for r in rows[1:25]] == [str(h) for h in range(24)]
    assert rows[25].startswith("all,")
