import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfi.data import (ContextMode, Dataset, IngestionError, build_contexts, gen_annulus, gen_synthetic_cf,
                      gen_two_moons, inverse_scale_shift, load_capacity_factors, scale_shift, solar_bell, split)


def _has_row(ds, y, c):
    return np.any(np.all(np.isclose(ds.samples, y, atol=1e-12), axis=1) & (ds.contexts[:, 0] == c))


def test_moon_endpoints():
    ds = gen_two_moons(200, noise=0.0, rng=0)
    assert _has_row(ds, [1.3, -0.85], 0)
    assert _has_row(ds, [5.3, 1.15], 1)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 501), st.integers(0, 1000))
def test_moon_label_balance_and_determinism(n, seed):
    ds = gen_two_moons(n, rng=seed)
    n1 = int(ds.contexts.sum())
    assert abs((n - n1) - n1) <= 1
    assert np.array_equal(ds.samples, gen_two_moons(n, rng=seed).samples)


def test_moon_sizes():
    assert len(gen_two_moons(100_000, rng=0)) == 100_000
    assert len(gen_two_moons(10_000, rng=1)) == 10_000
    with pytest.raises(ValueError):
        gen_two_moons(1)


def test_annulus():
    clean = gen_annulus(500, noise=0.0, rng=0)
    np.testing.assert_allclose(np.linalg.norm(clean.samples, axis=1), 1.0, atol=1e-12)
    noisy = gen_annulus(100_000, rng=1)
    assert np.linalg.norm(noisy.samples, axis=1).mean() == pytest.approx(1.0, abs=0.01)
    assert np.all(noisy.contexts == 0)
    np.testing.assert_array_equal(noisy.samples, gen_annulus(100_000, rng=1).samples)


def _write(path, rows, header="timestamp,cf_bus1,cf_bus2"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return path


def test_load_capacity_factors(tmp_path):
    p = _write(tmp_path / "a.csv", ["2018-01-01T00:00:00,0.1,0.2", "2018-01-01T01:00:00,1.02,-0.01"])
    t = load_capacity_factors(p)
    assert len(t) == 2
    np.testing.assert_allclose(t.cf, [[0.1, 0.2], [1.0, 0.0]])
    assert list(t.hours) == [0, 1]


@pytest.mark.parametrize("rows, line", [
    (["2018-01-01T00:00:00,0.1,0.2", "2018-01-01T01:00:00,1.5,0.2"], 3),
    (["2018-01-01T00:00:00,0.1"], 2),
    (["2018-01-01T00:00:00,abc,0.1"], 2),
    (["2018-01-01T01:00:00,0.1,0.1", "2018-01-01T00:00:00,0.1,0.1"], 3),
])
def test_load_rejects_bad_rows_with_line_number(tmp_path, rows, line):
    p = _write(tmp_path / "bad.csv", rows)
    with pytest.raises(IngestionError, match=f":{line}:"):
        load_capacity_factors(p)


def test_load_rejects_bad_header(tmp_path):
    with pytest.raises(IngestionError):
        load_capacity_factors(_write(tmp_path / "h.csv", [], header="time,a"))


def test_capacity_factor_round_trip(tmp_path):
    t = gen_synthetic_cf(3, rng=0)
    t.to_csv(tmp_path / "cf.csv")
    back = load_capacity_factors(tmp_path / "cf.csv")
    np.testing.assert_array_equal(back.timestamps, t.timestamps)
    np.testing.assert_allclose(back.cf, t.cf, atol=5e-7)


def test_synthetic_cf_properties():
    t = gen_synthetic_cf(60, rng=0)
    assert len(t) == 60 * 24 and t.n_buses == 3
    assert t.cf.min() >= 0 and t.cf.max() <= 1
    assert solar_bell(0) == 0 and solar_bell(12) == pytest.approx(1.0)
    for b in range(3):
        x = t.cf[:, b] - t.cf[:, b].mean()
        assert x[1:] @ x[:-1] / (x @ x) > 0.5
    night = t.cf[t.hours == 2].mean()
    noon = t.cf[t.hours == 12].mean()
    assert noon > night + 0.1
    np.testing.assert_array_equal(t.cf, gen_synthetic_cf(60, rng=0).cf)
    with pytest.raises(ValueError):
        gen_synthetic_cf(0)


def test_build_contexts():
    t = gen_synthetic_cf(2, rng=0)
    prev = build_contexts(t, "PREV")
    assert len(prev) == len(t) - 1 and prev.m == 3
    np.testing.assert_array_equal(prev.contexts, t.cf[:-1])
    np.testing.assert_array_equal(prev.samples, t.cf[1:])
    pt = build_contexts(t, ContextMode.PREV_T)
    row6 = np.flatnonzero(t.hours[1:] == 6)[0]
    np.testing.assert_allclose(pt.contexts[row6, 3:], [1.0, 0.0], atol=1e-15)
    row0 = np.flatnonzero(t.hours[1:] == 0)[0]
    np.testing.assert_allclose(pt.contexts[row0, 3:], [0.0, 1.0], atol=1e-15)
    td = build_contexts(t, "PREV_TD")
    assert td.m == 7
    day = 1 + 1  # row0 is midnight of Jan 2
    np.testing.assert_allclose(td.contexts[row0, 5:], [np.sin(2 * np.pi * day / 365), np.cos(2 * np.pi * day / 365)])


def test_scale_shift():
    ds = Dataset(np.array([[0.0, 1.0, 0.5]]), np.zeros((1, 0)))
    np.testing.assert_allclose(scale_shift(ds).samples, [[-3.0, 3.0, 0.0]])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=3, max_size=30))
def test_scale_shift_inverse(values):
    ds = Dataset(np.array(values).reshape(-1, 1), np.zeros((len(values), 0)))
    np.testing.assert_allclose(inverse_scale_shift(scale_shift(ds)).samples, ds.samples, atol=1e-12)


def test_split():
    ds = Dataset(np.arange(100.0)[:, None], np.zeros((100, 1)))
    tr, va = split(ds, 0.15, rng=0)
    assert (len(tr), len(va)) == (85, 15)
    tr2, va2 = split(ds, 0.15, rng=0)
    np.testing.assert_array_equal(va.samples, va2.samples)
    np.testing.assert_array_equal(np.sort(np.concatenate([tr.samples, va.samples])[:, 0]), np.arange(100.0))
    with pytest.raises(ValueError):
        split(ds, 1.0)


def test_dataset_csv(tmp_path):
    ds = gen_two_moons(50, rng=0)
    ds.to_csv(tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "y1,y2,c1"
    back = Dataset.from_csv(tmp_path / "d.csv")
    np.testing.assert_allclose(back.samples, ds.samples, rtol=1e-8)
    (tmp_path / "e.csv").write_text("")
    with pytest.raises(IngestionError):
        Dataset.from_csv(tmp_path / "e.csv")
    where = ds.where_context([1.0])
    assert len(where) == 25 and np.all(where.contexts == 1)
