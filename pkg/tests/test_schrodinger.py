import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shearflow_ldp import field_synth as fs
from shearflow_ldp import schrodinger as sch


def _random_potential(seed, n=300, r=3.0):
    v = fs.sample_field(fs.gaussian_density(), fs.Grid(-r - 1, 0.05, int((2 * r + 2) / 0.05) + 1), seed, 1)[0]
    return sch.Potential.from_field(v, (-r, r), n)


def test_free_eigenvalue_on_unit_box():
    res = sch.principal_eigenvalue(sch.Potential.constant(0.0, (-1.0, 1.0), 2000))
    assert abs(res.lam - math.pi ** 2 / 8) < 1e-4
    assert res.eigenfunction[0] == 0 and res.eigenfunction[-1] == 0
    assert np.all(res.eigenfunction[1:-1] > 0)


@settings(max_examples=20, deadline=None)
@given(st.floats(-20, 20), st.integers(0, 50))
def test_shift_identity(c, seed):
    V = _random_potential(seed)
    assert abs(sch.principal_eigenvalue(V + c).lam - (sch.principal_eigenvalue(V).lam - c)) < 1e-10


def test_dense_oracle_and_rayleigh():
    V = _random_potential(4)
    res = sch.principal_eigenvalue(V)
    dense = np.linalg.eigvalsh(sch.dense_operator(V.values, V.spacing))[0]
    assert abs(dense - res.lam) < 1e-10
    assert abs(sch.rayleigh_quotient(res.eigenfunction, V) - res.lam) < 1e-10
    assert res.residual < 1e-8


def test_sturm_count_against_eigvalsh():
    rng = np.random.default_rng(0)
    h = 0.1
    diag = 1 / h ** 2 - rng.normal(size=(5, 60))
    off = np.full(59, -0.5 / h ** 2)
    for x in (-2.0, 0.0, 5.0, 50.0):
        counts = sch.sturm_count(diag, off, x)
        for row, c in zip(diag, counts):
            ev = np.linalg.eigvalsh(np.diag(row) + np.diag(off, 1) + np.diag(off, -1))
            assert c == int(np.sum(ev < x))
    low = sch.bisect_lowest(diag, off)
    for row, lo in zip(diag, low):
        ev = np.linalg.eigvalsh(np.diag(row) + np.diag(off, 1) + np.diag(off, -1))
        assert abs(ev[0] - lo) < 1e-8


def test_domain_monotonicity():
    v = fs.sample_field(fs.gaussian_density(), fs.Grid.symmetric(12.0, 0.05), 8, 1)[0]
    lams = [sch.principal_eigenvalue(sch.Potential.from_field(v, (-r, r), int(80 * r))).lam for r in (1, 2, 4, 8)]
    assert all(b <= a + 1e-9 for a, b in zip(lams, lams[1:]))


def test_potential_validation():
    with pytest.raises(ValueError):
        sch.Potential((1.0, -1.0), 0.1, np.zeros(19))
    with pytest.raises(ValueError):
        sch.Potential((-1.0, 1.0), 0.1, np.zeros(5))
    with pytest.raises(ValueError):
        sch.Potential((-1.0, 1.0), 0.1, np.full(19, np.nan))


def test_min_subbox():
    v = fs.sample_field(fs.gaussian_density(), fs.Grid.symmetric(30.0, 0.05), 1, 1)[0]
    V = sch.Potential.from_field(v, (-20.0, 20.0), 800)
    res = sch.min_subbox_eigenvalue(V, 2.0)
    usable = [b for b in res.per_box if not b.clipped]
    assert res.min_lambda == min(b.lam for b in usable)
    assert any(b.clipped for b in res.per_box)
    # the box statistic cannot beat the eigenvalue of the whole interval
    assert sch.principal_eigenvalue(V).lam <= res.min_lambda + 1e-9
    with pytest.raises(ValueError):
        sch.min_subbox_eigenvalue(V, 1.0)


def test_wilson_interval():
    lo, hi = sch.wilson_interval(0, 100)
    assert lo == 0 and 0 < hi < 0.05
    lo, hi = sch.wilson_interval(50, 100)
    assert lo < 0.5 < hi


def test_tail_mc_errors_and_bounds():
    h = fs.gaussian_density()
    with pytest.raises(ValueError):
        sch.eigenvalue_tail_mc(h, 0.0, 2.0, [100.0], 0.0, 1000, 0)
    # far below any reachable eigenvalue: no hits, one-sided bound
    res = sch.eigenvalue_tail_mc(h, 1.0, 2.0, [100.0, 1000.0], -50.0, 500, 0)
    assert res.exponent_is_bound
    assert all(t.bound and t.n_hit == 0 for t in res.rows)


def test_tail_mc_worker_independent():
    h = fs.gaussian_density()
    a = sch.eigenvalue_tail_mc(h, 1.0, 2.0, [100.0, 1000.0], -0.5, 3000, 5, workers=1)
    b = sch.eigenvalue_tail_mc(h, 1.0, 2.0, [100.0, 1000.0], -0.5, 3000, 5, workers=2)
    assert a.table() == b.table()
