import math

import numpy as np
import pytest
from scipy import stats

from shearflow_ldp import field_synth as fs
from shearflow_ldp import path_mc as pm


def _const_field(c, half=400.0):
    grid = fs.Grid.symmetric(half, 0.5)
    return fs.FieldSample(grid.spacing, grid.origin, np.full(grid.count, c), 0, "const")


@pytest.fixture(scope="module")
def field():
    return pm.field_for_paths(fs.gaussian_density(), 1000.0, seed=11)


@pytest.mark.parametrize("kw", [dict(T=2.0, dt=0.01), dict(T=100.0, dt=2.0), dict(T=100.0, dt=0.3),
                                dict(T=100.0, dt=0.5, R=0.0), dict(T=100.0, dt=0.5, n_paths=0)])
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        pm.PathConfig(**kw)


def test_config_defaults():
    cfg = pm.PathConfig(1000.0, 5.0)
    assert cfg.n_steps == 200
    assert cfg.travel_time == pytest.approx(1000 / math.log(1000))


@pytest.mark.parametrize("c", [0.0, 0.7, -1.3])
def test_constant_field_gives_constant_y(c):
    cfg = pm.PathConfig(100.0, 1.0, n_paths=300, seed=3)
    ys = pm.simulate_y_samples(_const_field(c), cfg)
    assert np.allclose(ys.values, c / math.sqrt(math.log(100.0)), rtol=0, atol=1e-14)
    assert ys.off_fraction == 0.0


def test_mean_y_matches_heat_kernel_average(field):
    T, steps, n = 1000.0, 200, 10000
    cfg = pm.PathConfig(T, T / steps, n_paths=n, seed=5)
    ys = pm.simulate_y_samples(field, cfg)
    x = field.origin + field.grid_spacing * np.arange(field.count)
    expect = [float(np.interp(0.0, x, field.values))]
    for k in range(1, steps):
        w = stats.norm.pdf(x, scale=math.sqrt(k * cfg.dt))
        expect.append(float(np.dot(w, field.values) / w.sum()))
    target = np.mean(expect) / math.sqrt(math.log(T))
    se = ys.values.std(ddof=1) / math.sqrt(n)
    assert abs(ys.values.mean() - target) < 3 * se


def test_trajectory_decomposition(field):
    tr = pm.shear_trajectory(field, 100.0, 0.1, seed=2)
    assert np.array_equal(tr.X2, tr.W2 + tr.drift)
    zero = pm.shear_trajectory(_const_field(0.0), 100.0, 0.1, seed=2)
    assert np.all(zero.drift == 0) and np.array_equal(zero.X2, zero.W2)
    assert np.array_equal(zero.X1, tr.X1)


def test_zero_field_terminal_variance():
    ends = np.array([pm.shear_trajectory(_const_field(0.0), 50.0, 0.5, seed=s).X2[-1] for s in range(2000)])
    # chi-square band for the sample variance at 2000 paths
    assert 0.9 * 50 < ends.var(ddof=1) < 1.1 * 50


def test_strong_order(field):
    T, fine = 20.0, 0.0025
    dts = [0.04, 0.02, 0.01]
    errs = np.zeros(len(dts))
    for seed in range(40):
        ref = pm.shear_trajectory(field, T, fine, seed, substeps=1).X2[-1]
        for i, dt in enumerate(dts):
            k = int(round(dt / fine))
            errs[i] += abs(pm.shear_trajectory(field, T, dt, seed, substeps=k).X2[-1] - ref)
    slope = np.polyfit(np.log(dts), np.log(errs / 40), 1)[0]
    assert slope >= 0.4


def test_displacement_tracks_y():
    T = 1e4
    f = pm.field_for_paths(fs.gaussian_density(), T, seed=4)
    scale = T * math.sqrt(math.log(T))
    gaps = []
    for s in range(1000):
        tr = pm.shear_trajectory(f, T, T / 200, seed=s)
        gaps.append(abs(tr.X2[-1] / scale - tr.drift[-1] / scale))
    assert max(gaps) < 0.05


def test_exit_series_limits():
    assert pm.exit_probability(1e-3, 1.0) == pytest.approx(1.0)
    assert pm.exit_probability(10.0, 1.0) < 1e-20
    assert pm.log_exit_probability(3.0, 1.0) == pytest.approx(math.log(pm.exit_probability(3.0, 1.0)), rel=1e-10)


def test_exit_rates_ordered_and_match_series():
    T = 1000.0
    R = [0.01, 0.05, 4 / math.sqrt(T)]
    res = pm.exit_time_rate(R, T, n_paths=100000, seed=8)
    rates = [r.rate_mc for r in res]
    assert rates[0] > rates[1] > rates[2]
    assert abs(rates[0]) < 1e-4
    for r in res:
        p_exact = pm.exit_probability(r.R * T, T)
        assert abs(r.p_mc - p_exact) < 4 * r.se + 1e-3 * p_exact


def test_rate_cells(field):
    est = pm.estimate_rate_curve(fs.gaussian_density(), [0.0, 5.0], 0.05, [1000.0], 2000, seed=1,
                                 steps=200, field=field)
    centre, far = est.cell(0.0, 1000.0), est.cell(5.0, 1000.0)
    assert not centre.bound and abs(centre.rate) < 0.05
    assert far.bound and far.hits == 0
    assert far.rate == pytest.approx(math.log(1 / 2000) / 1000)


def test_occupation_constant_path():
    occ = pm.occupation_measure(np.full(101, 2.5), 0.0, 100.0, 10)
    assert occ.mass.max() == 1.0 and occ.mass.sum() == 1.0


def test_occupation_additive():
    rng = np.random.default_rng(0)
    path = np.cumsum(rng.standard_normal(1001))
    edges = np.linspace(-100, 100, 41)
    a = pm.occupation_measure(path, 0, 400, edges)
    b = pm.occupation_measure(path, 400, 1000, edges)
    ab = pm.occupation_measure(path, 0, 1000, edges)
    assert np.allclose(0.4 * a.mass + 0.6 * b.mass, ab.mass, atol=1e-14)
    with pytest.raises(ValueError):
        pm.occupation_measure(path, 500, 400, edges)


def test_brownian_occupation_concentrates():
    T = 400.0
    path = np.concatenate([[0.0], np.cumsum(pm.brownian_increments(6, 4000, 0.1))])
    occ = pm.occupation_measure(path, 0, T, np.linspace(-4 * math.sqrt(T), 4 * math.sqrt(T), 81), dt=0.1)
    assert occ.mass.sum() >= 0.999


def test_increments_chi_square():
    z = pm.brownian_increments(21, 100000, 0.25) / 0.5
    edges = stats.norm.ppf(np.linspace(0, 1, 21))
    counts = np.histogram(z, bins=edges)[0]
    assert stats.chisquare(counts).pvalue > 0.01


def test_worker_count_does_not_change_results(field):
    cfg = pm.PathConfig(300.0, 3.0, n_paths=700, seed=9)
    a = pm.simulate_y_samples(field, cfg, workers=1)
    b = pm.simulate_y_samples(field, cfg, workers=3)
    assert np.array_equal(a.values, b.values)
    e1 = pm.exit_time_rate([0.05], 300.0, 600, seed=2, workers=1)[0]
    e3 = pm.exit_time_rate([0.05], 300.0, 600, seed=2, workers=4)[0]
    assert e1.p_mc == e3.p_mc


@pytest.fixture(scope="module")
def strategies():
    return {r: pm.strategy_lower_bound(None, (0.0, r), 80.0, 0.05, 20000, seed=3) for r in (4.0, 8.0)}


def test_strategy_confinement_rate(strategies):
    s = strategies[4.0]
    assert not s.bound
    target = -math.pi ** 2 / (8 * 16)
    assert abs(s.confinement_log_rate - target) <= 0.2 * abs(target)
    assert s.inside_mass >= 0.99


def test_strategy_box_doubling(strategies):
    ratio = strategies[4.0].decay_rate / strategies[8.0].decay_rate
    assert 3.0 < ratio < 5.0


def test_strategy_validation():
    with pytest.raises(ValueError):
        pm.strategy_lower_bound(None, (0.0, 0.5), 80.0, 0.05, 10, seed=0)
    with pytest.raises(ValueError):
        pm.strategy_lower_bound(None, (100.0, 4.0), 80.0, 0.05, 10, seed=0)
