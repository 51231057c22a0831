import math

import numpy as np
import pytest

from shearflow_ldp import field_synth as fs


def test_density_validation():
    with pytest.raises(ValueError):
        fs.SpectralDensity("nope")
    with pytest.raises(ValueError):
        fs.matern_power_density(beta=-1.0)
    with pytest.raises(ValueError):
        fs.SpectralDensity("table", {"lambda": [0.0, 1.0], "h": [1.0, -1.0]})


def test_density_json_roundtrip():
    h = fs.matern_power_density(0.5, 2.0, 1.5)
    assert fs.SpectralDensity.from_json(h.to_json()) == h
    with pytest.raises(ValueError):
        fs.SpectralDensity.from_json({"family": "gaussian", "extra": 1})


@pytest.mark.parametrize("h", [fs.gaussian_density(), fs.cauchy_density(), fs.matern_power_density(1.5)])
def test_covariance_from_density_matches_closed_form(h):
    K = fs.covariance_from_density(h, 6.0, 0.1)
    exact = h.analytic_covariance(K.lags)
    assert np.max(np.abs(K.values - exact)) < 1e-4 * h.variance


def test_samples_are_deterministic_and_worker_independent():
    h = fs.gaussian_density()
    grid = fs.Grid(0.0, 0.25, 100)
    a = fs.sample_array(h, grid, 11, 150, workers=1)
    b = fs.sample_array(h, grid, 11, 150, workers=3)
    assert np.array_equal(a, b)
    # a sample does not depend on which batch produced it
    c = fs.sample_array(h, grid, 11, 10, start=70)
    assert np.array_equal(a[70:80], c)


def test_aliasing_is_rejected():
    with pytest.raises(ValueError, match="aliases"):
        fs.sample_field(fs.gaussian_density(), fs.Grid(0.0, 1.0, 10), 0, 1)


def test_empirical_covariance_within_three_se():
    h = fs.gaussian_density()
    samples = fs.sample_field(h, fs.Grid(0.0, 0.5, 40), 3, 3000)
    emp = fs.empirical_covariance(samples, 3.0)
    mid = emp.n_half
    for k in range(0, 7):
        x = 0.5 * k
        assert abs(emp.values[mid + k] - math.exp(-x * x / 2)) <= 3.5 * emp.stderr[mid + k]


def test_split_reconstructs_and_has_compact_support():
    h = fs.gaussian_density()
    sp = fs.split_field(h, 4.0, fs.Grid.symmetric(20.0, 0.125), 9)
    assert np.allclose(sp.v_L.values + sp.v_tilde.values, sp.v.values, atol=1e-12)
    lags = np.abs(sp.K_L.lags)
    assert np.all(sp.K_L.values[lags > 4.0] == 0.0)
    assert sp.K_L.support_bound == 4.0
    k = [fs.split_field(h, L, fs.Grid.symmetric(40.0, 0.125), 9).k_tilde0 for L in (4.0, 8.0, 16.0)]
    assert k[0] > k[1] > k[2] >= 0


def test_cutoff_shape():
    psi = fs.CutoffSpec(1.0)
    x = np.linspace(-1, 1, 401)
    y = psi(x)
    assert np.all(y[np.abs(x) <= 0.25] == 1.0)
    assert np.all(y[np.abs(x) >= 0.5] == 0.0)
    assert np.all((y >= 0) & (y <= 1))
    assert np.allclose(y, y[::-1])


def test_envelope_ratio_is_bounded():
    # the finite-L maximum sits below the sqrt(2 K(0) log L) envelope on average
    h = fs.gaussian_density()
    samples = fs.sample_field(h, fs.Grid.symmetric(256.0, 0.25), 2, 60)
    env = fs.envelope_ratio(samples, [16.0, 64.0, 256.0], 1.0)
    se = env.ratios.std(axis=0, ddof=1) / math.sqrt(env.ratios.shape[0])
    assert np.all(env.median <= 1.0 + 3 * se)
    assert np.all(env.median > 0.5)


def test_field_csv_roundtrip(tmp_path):
    s = fs.sample_field(fs.gaussian_density(), fs.Grid(-2.0, 0.25, 17), 4, 1)[0]
    p = tmp_path / "f.csv"
    fs.write_field_csv(s, p)
    r = fs.read_field_csv(p)
    assert np.array_equal(r.values, s.values)
    assert r.origin == s.origin and r.grid_spacing == s.grid_spacing
