"""The tail functional ``J_r(x)`` and the constrained energy ``I_1(y)``.

``J_r(x) = inf_f (e(f) - x)^2 / (2 Q(f))`` below the Dirichlet floor of
``I_r``.  It is minimized directly (not through ``Lambda``) with L-BFGS in
sine-basis coordinates scaled by ``(mu_k + sigma)^-1/2``, which whitens the
Laplacian part of the objective.  ``f = u / ||u||`` keeps the search
unconstrained.

``I_1(y) = inf {e(f) : sqrt(Q(f)) >= |y|/sqrt(2) + margin}`` is solved
through the Lagrangian ``e - t Q``: convexity of ``Q`` in ``f^2`` gives a
majorizer whose minimizer is a ground state, and ``t`` is bisected until the
constraint is met.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import core
from .lam import start_profile


# ---------------------------------------------------------------------------
# J_r


@dataclass
class JrResult:
    value: float
    profile: core.Profile | None
    converged: bool
    threshold: float
    start_index: int = -1
    grad_norm: float = 0.0


def threshold(r: float, n_grid: int | None = None) -> float:
    """``c / r^2`` with ``c = pi^2/8``; the discrete floor when ``n_grid`` is given."""
    if n_grid is None:
        return math.pi ** 2 / (8 * r * r)
    return core.dirichlet_floor(r, n_grid)


class _JObjective:
    def __init__(self, op: core.FormOperator, x: float, sigma: float):
        self.op, self.x, self.h = op, x, op.h
        mu = core.laplacian_spectrum(op.m, op.h)
        self.s = 1.0 / np.sqrt(mu + sigma)

    def profile(self, z: np.ndarray) -> np.ndarray:
        u = core.dst(self.s * z)
        return u / math.sqrt(self.h * np.dot(u, u))

    def value_grad(self, z: np.ndarray) -> tuple[float, np.ndarray]:
        h, op = self.h, self.op
        u = core.dst(self.s * z)
        N = math.sqrt(h * np.dot(u, u))
        f = u / N
        g = f * f
        c = op.conv(g)
        q = h * float(np.dot(c, g))
        e = core.energy(f, h)
        d = e - self.x
        F = d * d / (2 * q)
        de = h * core.neg_laplacian(f, h)
        dq = 4 * h * f * c
        G = (d / q) * de - (d * d / (2 * q * q)) * dq
        Gu = (G - h * f * float(np.dot(f, G))) / N
        return F, self.s * core.dst(Gu)

    def start(self, f0: np.ndarray) -> np.ndarray:
        return core.dst(f0) / self.s


def j_r(K, x: float, r: float, n_grid: int | None = None, spacing: float | None = None,
        mode: str = "point", starts=("bump", "narrow", "plateau", "ground"),
        maxiter: int = 3000) -> JrResult:
    """``J_r(x)``; ``0`` when ``x`` reaches the Dirichlet floor of the grid."""
    if r <= 0:
        raise ValueError("r must be positive")
    if n_grid is None:
        if spacing is None:
            raise ValueError("give n_grid or spacing")
        n_grid = int(round(2 * r / spacing))
    floor = core.dirichlet_floor(r, n_grid)
    if x >= floor:
        return JrResult(0.0, None, True, floor)
    h = 2 * r / n_grid
    op = core.FormOperator(K, h, n_grid - 1, mode)
    obj = _JObjective(op, x, sigma=max(floor, abs(x), 1.0))
    best = None
    for i, kind in enumerate(starts):
        if kind == "ground":
            f0 = core.Profile.ground(r, n_grid).interior
        else:
            f0 = start_profile(kind, r, n_grid)
        sol = optimize.minimize(obj.value_grad, obj.start(f0), jac=True, method="L-BFGS-B",
                                options={"maxiter": maxiter, "ftol": 1e-15, "gtol": 1e-12,
                                         "maxcor": 20})
        if best is None or sol.fun < best[0].fun:
            best = (sol, i)
    sol, idx = best
    f = obj.profile(sol.x)
    gnorm = float(np.linalg.norm(obj.value_grad(sol.x)[1]))
    ok = bool(sol.success) or gnorm < 1e-8 * max(1.0, sol.fun)
    return JrResult(float(sol.fun), core.Profile.from_interior(r, f), ok, floor, idx, gnorm)


# ---------------------------------------------------------------------------
# I_1


@dataclass
class I1Result:
    value: float
    profile: core.Profile | None
    q: float
    target: float
    multiplier: float
    jump: bool  # the Lagrangian frontier skipped over the target
    feasible: bool
    r: float = 0.0


def lagrangian_descent(op: core.FormOperator, t: float, f0: np.ndarray, max_iter: int = 5000,
                       tol: float = 1e-14) -> tuple[np.ndarray, float, float]:
    """Minimize ``e - t Q`` over unit profiles; returns (f, e, Q)."""
    h = op.h
    f = f0 / math.sqrt(h * np.dot(f0, f0))
    g = f * f
    c = op.conv(g)
    q = h * float(np.dot(c, g))
    val = core.energy(f, h) - t * q
    for _ in range(max_iter):
        _, fn = core.ground_state(2 * t * c, h)
        gn = fn * fn
        cn = op.conv(gn)
        qn = h * float(np.dot(cn, gn))
        vn = core.energy(fn, h) - t * qn
        if vn > val:
            break
        step = math.sqrt(h * float(np.dot(fn - f, fn - f)))
        drop = val - vn
        f, c, q, val = fn, cn, qn, vn
        if drop <= tol * max(1.0, abs(val)) and step < 1e-8:
            break
    return f, core.energy(f, h), q


def i1_box(K, y: float, r: float, n_grid: int, mode: str = "cell", margin: float = 1e-6,
           warm: np.ndarray | None = None, max_bisect: int = 80) -> I1Result:
    """``I_1(y)`` restricted to profiles on ``I_r``."""
    h = 2 * r / n_grid
    op = core.FormOperator(K, h, n_grid - 1, mode)
    s_target = abs(y) / math.sqrt(2) + margin
    q_target = s_target ** 2
    f0 = warm if warm is not None else start_profile("bump", r, n_grid)
    if y == 0:
        lam0, f = core.ground_state(np.zeros(n_grid - 1), h)
        g = f * f
        q = op.form(g)
        return I1Result(lam0, core.Profile.from_interior(r, f), q, q_target, 0.0, False, q >= q_target, r)
    # t = 0 end: the free ground state
    _, f_lo = core.ground_state(np.zeros(n_grid - 1), h)
    q_lo = op.form(f_lo * f_lo)
    if q_lo >= q_target:
        return I1Result(core.energy(f_lo, h), core.Profile.from_interior(r, f_lo), q_lo, q_target,
                        0.0, False, True, r)
    k0 = op.w[0] if mode == "point" else float(op.w.max())
    if q_target >= k0 * (1 + 1e-12):
        return I1Result(math.inf, None, math.nan, q_target, math.inf, False, False, r)
    t_lo, t_hi = 0.0, 1.0
    f_hi, e_hi, q_hi = lagrangian_descent(op, t_hi, f0)
    grow = 0
    while q_hi < q_target:
        t_lo, f_lo, q_lo = t_hi, f_hi, q_hi
        t_hi *= 2
        f_hi, e_hi, q_hi = lagrangian_descent(op, t_hi, f_hi)
        grow += 1
        if grow > 200:
            return I1Result(math.inf, None, q_hi, q_target, t_hi, False, False, r)
    for _ in range(max_bisect):
        if q_hi - q_target <= 1e-12 * q_target or t_hi - t_lo <= 1e-13 * t_hi:
            break
        t_mid = 0.5 * (t_lo + t_hi)
        f_m, e_m, q_m = lagrangian_descent(op, t_mid, f_hi)
        if q_m >= q_target:
            t_hi, f_hi, e_hi, q_hi = t_mid, f_m, e_m, q_m
        else:
            t_lo, f_lo, q_lo = t_mid, f_m, q_m
    jump = (q_hi - q_target) > 1e-6 * q_target
    return I1Result(e_hi, core.Profile.from_interior(r, f_hi), q_hi, q_target, t_hi, jump, True, r)


def i1(K, y: float, rungs=(4, 8, 16, 32), points_per_width: float = 16.0, mode: str = "cell",
       rtol: float = 1e-4, scale: float | None = None, y0_rungs=(4, 8, 16, 32)) -> I1Result:
    """``I_1(y)`` as the limit of nested boxes sized in units of the optimizer width.

    At ``y = 0`` the box floor ``pi^2/(8 r^2)`` is extrapolated (Richardson)
    toward its limit ``0``.
    """
    if y == 0:
        vals = [math.pi ** 2 / (8 * r * r) for r in y0_rungs]
        rich = vals[-1] + (vals[-1] - vals[-2]) / 3.0
        res = i1_box(K, 0.0, float(y0_rungs[-1]), 64, mode)
        res.value = max(rich, 0.0)
        return res
    if scale is None:
        scale = _i1_scale(K, y, mode)
    sp = scale / points_per_width
    prev, warm = None, None
    res = None
    for k, rung in enumerate(rungs):
        n = int(round(2 * scale * rung / sp))
        r = n * sp / 2
        if res is not None and res.profile is not None:
            warm = res.profile.pad(r).interior
        res = i1_box(K, y, r, n, mode, warm=warm)
        if prev is not None and math.isfinite(res.value) and \
                abs(prev - res.value) <= rtol * abs(res.value) + 1e-12:
            break
        prev = res.value
    return res


def _i1_scale(K, y: float, mode: str, r0: float = 8.0, n_points: int = 128, max_tries: int = 12) -> float:
    """Width of the constrained minimizer, found on growing or shrinking pilot boxes."""
    r = r0
    w = r / 4
    for _ in range(max_tries):
        res = i1_box(K, y, r, n_points, mode)
        if res.profile is None:
            return w
        w = res.profile.width()
        if w > r / 5:
            r *= 4
        elif w < r / 40:
            r /= 4
        else:
            return w
    return w
