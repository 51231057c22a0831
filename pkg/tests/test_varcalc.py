import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shearflow_ldp import varcalc as vc
from shearflow_ldp.varcalc import core, hierarchy, lam, rate, scaling, tails

K = core.gaussian_kernel()


def _bump(r=4.0, n=80, width=1.0):
    return core.Profile.from_function(lambda x: np.exp(-0.5 * (x / width) ** 2) * (r * r - x * x), r, n)


def test_cell_weights_approach_point_weights_on_fine_grids():
    h = 0.01
    pt = core.lag_weights(K, h, 200, "point")
    cell = core.lag_weights(K, h, 200, "cell")
    assert np.max(np.abs(pt - cell)) < 1e-4
    with pytest.raises(ValueError):
        core.lag_weights(K, h, 10, "trapezoid")


@pytest.mark.parametrize("mode", ["point", "cell"])
def test_fast_form_matches_double_sum(mode):
    f = _bump()
    fast = core.quadratic_form(K, f, "point")
    assert abs(fast - core.quadratic_form_direct(K, f)) < 1e-12 * fast
    # both weightings bounded by k0 for a unit profile
    assert 0 < core.quadratic_form(K, f, mode) <= K.k0 + 1e-12


def test_local_kernel_form_is_l4():
    f = _bump()
    assert core.quadratic_form(core.LocalKernel(), f) == pytest.approx(f.l4_4(), rel=1e-12)


def test_profile_rejects_unnormalized():
    with pytest.raises(ValueError):
        core.Profile(2.0, np.array([0.0, 1.0, 0.0]))
    with pytest.raises(ValueError):
        core.Profile.from_interior(1.0, np.zeros(5))


def test_lambda_increases_with_box_and_respects_bound():
    vals = []
    for r in (2.0, 4.0, 8.0):
        res = lam.lambda_of_alpha(K, 1.0, r, spacing=0.1, mode="cell")
        assert res.residual < 1e-6
        vals.append(res.value)
    assert vals[0] <= vals[1] + 1e-9 <= vals[2] + 2e-9
    assert vals[-1] <= math.sqrt(2 * K.k0)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.05, 5.0))
def test_lambda_even_and_below_linear_bound(a):
    plus = lam.lambda_of_alpha(K, a, 3.0, n_grid=60).value
    minus = lam.lambda_of_alpha(K, -a, 3.0, n_grid=60).value
    assert plus == minus
    assert plus <= abs(a) * math.sqrt(2 * K.k0)


def test_lambda_at_zero_is_minus_floor():
    res = lam.lambda_of_alpha(K, 0.0, 2.0, n_grid=100)
    assert res.value == pytest.approx(-core.dirichlet_floor(2.0, 100), rel=1e-10)


def test_jr_vanishes_at_and_above_floor():
    r, n = 2.0, 80
    floor = core.dirichlet_floor(r, n)
    assert tails.j_r(K, floor, r, n_grid=n).value == 0.0
    assert tails.j_r(K, 2 * floor, r, n_grid=n).value == 0.0
    inside = tails.j_r(K, 0.5 * floor, r, n_grid=n)
    assert inside.value > 0 and inside.converged
    assert tails.threshold(r) == pytest.approx(math.pi ** 2 / 32)


def test_jr_decreasing_in_x():
    r, n = 2.0, 60
    xs = [-1.0, -0.5, 0.0, 0.2]
    js = [tails.j_r(K, x, r, n_grid=n).value for x in xs]
    assert all(a >= b - 1e-10 for a, b in zip(js, js[1:]))


def test_i1_infinite_beyond_frontier():
    y = 1.01 * math.sqrt(2 * K.k0)
    res = tails.i1_box(K, y, 4.0, 64)
    assert math.isinf(res.value) and not res.feasible
    assert math.isinf(hierarchy.i_n(K, y, 2)[0])


def test_i1_box_meets_constraint():
    res = tails.i1_box(K, 0.8, 4.0, 64)
    assert res.feasible
    assert res.q >= res.target - 1e-10
    assert res.value == pytest.approx(res.profile.energy(), rel=1e-8)


def test_kstar_quadratic_identity():
    # u = K * f^2 / sqrt(Q) attains the supremum with value 1/2
    f = _bump(r=3.0, n=60)
    op = core.FormOperator(K, f.spacing, f.values.size, "point")
    c = op.conv(f.values ** 2)
    q = f.spacing * float(np.dot(c, f.values ** 2))
    res = hierarchy.kstar(K, c / math.sqrt(q), f.r)
    assert not res.unbounded
    assert res.value == pytest.approx(0.5, rel=1e-6)


def test_kstar_zero_kernel_unbounded():
    zero = core.KernelFunction(lambda x: np.zeros_like(x), 0.0, "zero", 0.0)
    res = hierarchy.kstar(zero, np.ones(21), 1.0)
    assert res.unbounded and math.isinf(res.value)
    assert hierarchy.kstar(K, np.zeros(21), 1.0).value == 0.0


def test_optimal_profiles_zero_form_branch():
    zero = core.KernelFunction(lambda x: np.zeros_like(x), 0.0, "zero", 0.0)
    f = _bump(r=2.0, n=40)
    mix = hierarchy.MixtureProblem(2, np.array([0.5, 0.5]), [f, f.reflect()], 0.3)
    out = hierarchy.optimal_profiles(mix, zero, 0.3)
    assert out.S == 0 and math.isinf(out.value)
    assert out.constraint == pytest.approx(0.3, rel=1e-12)
    assert hierarchy.optimal_profiles(mix, zero, 0.0).value == 0.0


def test_optimal_profiles_constraint_and_value():
    f, g = _bump(r=3.0, n=60), _bump(r=3.0, n=60, width=0.5)
    mix = hierarchy.MixtureProblem(2, np.array([0.3, 0.7]), [f, g], 0.5)
    out = hierarchy.optimal_profiles(mix, K, 0.5, check=True)
    assert out.constraint == pytest.approx(0.5, rel=1e-10)
    assert out.value == pytest.approx(0.125 / out.S ** 2, rel=1e-12)
    assert max(out.kstar_values) == pytest.approx(out.value, rel=1e-5)


def test_mixture_validation():
    f = _bump()
    with pytest.raises(ValueError):
        hierarchy.MixtureProblem(2, np.array([1.0]), [f, f], 0.1)
    with pytest.raises(ValueError):
        hierarchy.MixtureProblem(1, np.array([-1.0]), [f], 0.1)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 1))
def test_conjugate_convex_in_slope(s1, s2, t):
    xs = np.linspace(-2, 2, 41)
    fs = np.abs(xs) ** 1.5 + 0.1 * np.cos(3 * xs)
    mid = rate.conjugate(xs, fs, t * s1 + (1 - t) * s2)[0]
    assert mid <= t * rate.conjugate(xs, fs, s1)[0] + (1 - t) * rate.conjugate(xs, fs, s2)[0] + 1e-12


def test_conjugate_of_parabola_is_exact():
    xs = np.linspace(-3, 3, 31)
    for s in (-1.3, 0.0, 0.7, 2.0):
        val, arg, edge = rate.conjugate(xs, 0.5 * xs ** 2, s)
        assert val == pytest.approx(0.5 * s * s, abs=1e-12)
        assert arg == pytest.approx(s, abs=1e-12) and not edge


def _toy_table():
    a = np.linspace(-2, 2, 41)
    lim = 0.5 * a ** 2
    return rate.RateTable(a, lim[:, None], np.full((41, 1), 8.0), lim, np.ones(41, dtype=bool), [8])


def test_rate_table_roundtrip_and_even(tmp_path):
    t = _toy_table().with_j([-1.0, 0.0, 0.5, 1.5])
    assert t.j_vals == pytest.approx(0.5 * t.ys ** 2, abs=1e-10)
    t.write_csv(tmp_path / "l.csv", tmp_path / "j.csv", {"seed": 1})
    back = rate.RateTable.read_csv(tmp_path / "l.csv", tmp_path / "j.csv")
    assert np.array_equal(back.alphas, t.alphas)
    assert np.array_equal(back.limits, t.limits)
    assert np.array_equal(back.j_vals, t.j_vals)
    back.check_even()
    back.limits[3] += 1e-6
    with pytest.raises(ValueError):
        back.check_even()


def test_rate_table_diverges_beyond_slope_range():
    t = _toy_table().with_j([2.5])
    assert t.diverged[0]


def test_riesz_box_exact_matches_quadrature():
    for beta in (0.2, 0.5, 0.8):
        f = core.Profile.from_interior(1.0, np.ones(1999))
        assert scaling.riesz_quadratic(f, beta) == pytest.approx(scaling.riesz_box_exact(beta), rel=5e-3)


@pytest.mark.parametrize("lam_", [0.5, 2.0])
def test_dilation_isometry(lam_):
    (e1, q1), (e2, q2) = scaling.isometry_check(K, _bump(), lam_)
    assert e1 == pytest.approx(e2, rel=1e-12)
    assert q1 == pytest.approx(q2, rel=1e-12)


def test_gn_constant_matches_sech_oracle():
    gn = scaling.gn_constant()
    oracle, p = scaling.sech_oracle()
    assert p == pytest.approx(1.0, abs=1e-5)
    assert gn.value == pytest.approx(oracle, rel=1e-3)


def test_public_names():
    for name in ("lambda_of_alpha", "j_r", "kstar", "build_rate_table", "scaling_analysis"):
        assert hasattr(vc, name)
