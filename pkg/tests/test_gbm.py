import numpy as np
import pytest

from gmsde.gbm import (
    GPath,
    TimeGrid,
    coarsen,
    counter_normals,
    path_key,
    qv_band_check,
    sample_batch,
    sample_path,
    write_path_csv,
)
from gmsde.gexp import VolatilityBand, VolatilityControl, make_scenario_set


def test_grid():
    g = TimeGrid(2.0, 8)
    assert g.step == 0.25
    assert g.times[0] == 0.0 and g.times[-1] == 2.0 and len(g.times) == 9
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 4)


def test_counter_normals_are_addressable():
    key = path_key((1, 2, 3))
    stream = counter_normals(key, 40)
    for k in (0, 3, 4, 17, 39):
        assert counter_normals(key, 1, start=k)[0] == stream[k]
    np.testing.assert_array_equal(counter_normals(key, 10, start=5), stream[5:15])


def test_sample_path_qv_constant_control():
    p = sample_path(VolatilityControl.constant(4.0), TimeGrid(1.0, 256), seed=3)
    assert p.qv[-1] == 4.0
    assert p.b[0, 0] == 0.0 and p.qv[0] == 0.0


def test_sample_path_deterministic_and_seed_sensitive():
    c = VolatilityControl((0.0, 0.5), (1.0, 2.0), horizon=1.0)
    g = TimeGrid(1.0, 64)
    a, b = sample_path(c, g, 9), sample_path(c, g, 9)
    np.testing.assert_array_equal(a.b, b.b)
    np.testing.assert_array_equal(a.qv, b.qv)
    assert not np.array_equal(a.b, sample_path(c, g, 10).b)


def test_batch_order_independent():
    c = VolatilityControl.constant(1.0)
    g = TimeGrid(1.0, 32)
    seeds = [(0, i) for i in range(6)]
    fwd = sample_batch(c, g, seeds)
    rev = sample_batch(c, g, seeds[::-1])
    np.testing.assert_array_equal(fwd.db, rev.db[::-1])


def test_control_must_cover_horizon():
    c = VolatilityControl((0.0,), (1.0,), horizon=0.5)
    with pytest.raises(ValueError):
        sample_path(c, TimeGrid(1.0, 8), 0)


def test_qv_independent_of_draws():
    c = VolatilityControl((0.0, 0.25, 0.5), (1.0, 3.0, 2.0), horizon=1.0)
    g = TimeGrid(1.0, 64)
    b = sample_batch(c, g, [1, 2, 3])
    expected = np.concatenate([[0.0], np.cumsum(c.at(g.times[:-1]) * g.step)])
    np.testing.assert_array_equal(b.qv, expected)


def test_classical_variance():
    """Degenerate band: Var(B_1) over 10^4 paths within 3 SE of 1."""
    g = TimeGrid(1.0, 16)
    batch = sample_batch(VolatilityControl.constant(1.0), g, [(5, j) for j in range(10_000)])
    b1 = batch.b[:, -1, 0]
    var = b1.var(ddof=1)
    se = np.sqrt(np.var((b1 - b1.mean()) ** 2, ddof=1) / b1.size)
    assert abs(var - 1.0) <= 3 * se


def test_third_moment_small_time():
    """E|B_h|^3 / h at the smallest step stays within 3 SE of the Gaussian value."""
    h = 2.0**-10
    g = TimeGrid(h, 1)
    batch = sample_batch(VolatilityControl.constant(1.0), g, [(6, j) for j in range(10_000)])
    v = np.abs(batch.db[:, 0, 0]) ** 3 / h
    gaussian = 2.0 * np.sqrt(2.0 / np.pi) * h**1.5 / h  # E|N(0,h)|^3 / h
    assert abs(v.mean() - gaussian) <= 3 * v.std(ddof=1) / np.sqrt(v.size)


def test_qv_band_check_examples():
    band = VolatilityBand(1.0, 2.0)
    scen = make_scenario_set(band, 3, 2, 4, 0)
    g = TimeGrid(1.0, 64)
    for i, c in enumerate(scen):
        assert qv_band_check(sample_path(c, g, i), band)
    p = sample_path(VolatilityControl.constant(2.0), g, 1)
    np.testing.assert_allclose(p.qv, 2.0 * g.times, rtol=1e-12)
    bad_qv = p.qv.copy()
    bad_qv[2] = bad_qv[1] - 0.01
    assert not qv_band_check(GPath(g, p.b, bad_qv), band)
    # a path outside the envelope
    assert not qv_band_check(sample_path(VolatilityControl.constant(3.0), g, 1), band)


def test_multi_component_paths():
    g = TimeGrid(1.0, 16)
    p = sample_path(VolatilityControl.constant(1.0), g, 2, dim=3)
    assert p.b.shape == (17, 3)
    assert not np.array_equal(p.b[:, 0], p.b[:, 1])


def test_coarsen_sums_increments():
    g = TimeGrid(1.0, 32)
    b = sample_batch(VolatilityControl.constant(1.0), g, [1, 2])
    c = coarsen(b, 2)
    assert c.grid.n_steps == 16
    np.testing.assert_allclose(c.b[:, :, 0], b.b[:, ::2, 0], atol=1e-14)
    np.testing.assert_allclose(c.qv, b.qv[::2], atol=1e-14)


def test_write_path_csv(tmp_path):
    p = sample_path(VolatilityControl.constant(1.0), TimeGrid(1.0, 4), 0)
    dest = tmp_path / "p.csv"
    write_path_csv(p, dest)
    lines = dest.read_text().splitlines()
    assert lines[0] == "t,B,QV"
    assert len(lines) == 6
    assert float(lines[-1].split(",")[2]) == 1.0
