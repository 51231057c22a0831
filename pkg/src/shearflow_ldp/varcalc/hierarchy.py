"""``I_1`` tables and their transforms, the mixture hierarchy ``I_n``, ``K*_r``
and the closed-form optimal profiles.

``I_n(y)`` mixes ``n`` profiles with simplex weights; its value is
``sum alpha_i e(f_i)`` under ``sum alpha_i sqrt(Q(f_i)) >= |y|/sqrt(2)``.
Each profile contributes a point ``(sqrt(Q), e)`` of the ``I_1`` frontier,
so ``I_n`` is a linear program over a library of ``I_1`` minimizers; a basic
optimum uses at most two of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from .. import rng as _rng
from . import core, tails
from .rate import conjugate


# ---------------------------------------------------------------------------
# I_1 tables and duality closure


@dataclass
class I1Table:
    ys: np.ndarray  # non-negative, increasing, starts at 0
    values: np.ndarray
    results: list = field(default_factory=list)

    def conjugate(self, alpha: float) -> float:
        """``I_1*(alpha) = sup_y alpha y - I_1(y)``; ``inf`` if the sup sits on the last y."""
        val, _, edge = conjugate(self.ys, self.values, abs(alpha))
        return math.inf if edge else val


def build_i1_table(K, ys: Sequence[float], mode: str = "cell", workers: int = 1) -> I1Table:
    ys = np.unique(np.abs(np.asarray(ys, dtype=float)))
    if ys[0] != 0.0:
        ys = np.concatenate([[0.0], ys])
    res = _rng.parallel_map(lambda y: tails.i1(K, float(y), mode=mode), list(ys), workers)
    return I1Table(ys, np.array([r.value for r in res]), res)


def double_conjugate(table: I1Table, alphas: Sequence[float], y: float) -> float:
    """``I_1**(y)`` from ``I_1*`` sampled on ``alphas`` (non-negative)."""
    a = np.unique(np.abs(np.asarray(alphas, dtype=float)))
    star = np.array([table.conjugate(t) for t in a])
    ok = np.isfinite(star)
    val, _, edge = conjugate(a[ok], star[ok], abs(y))
    return math.inf if edge else val


# ---------------------------------------------------------------------------
# mixtures


@dataclass
class MixtureProblem:
    n: int
    alphas: np.ndarray
    profiles: list
    y: float
    energies: np.ndarray | None = None
    forms: np.ndarray | None = None

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=float)
        if a.shape != (self.n,) or len(self.profiles) != self.n:
            raise ValueError("need exactly n weights and n profiles")
        if np.any(a < 0):
            raise ValueError("weights must be non-negative")
        a = a / a.sum()
        if abs(a.sum() - 1.0) > 1e-12:
            raise ValueError("weights must lie on the simplex")
        self.alphas = a
        for p in self.profiles:
            if abs(p.norm2() - 1.0) > 1e-10:
                raise ValueError("every profile must be unit-normalized")

    def value(self) -> float:
        """``1/2 sum alpha_i ||f_i'||^2``."""
        return float(sum(a * p.energy() for a, p in zip(self.alphas, self.profiles)))

    def constraint(self, K, mode: str = "cell") -> float:
        """``sum alpha_i sqrt(Q(f_i))``."""
        return float(sum(a * math.sqrt(core.quadratic_form(K, p, mode))
                         for a, p in zip(self.alphas, self.profiles)))


@dataclass
class Library:
    """``I_1`` minimizers indexed by the y they were solved for."""

    ys: list
    profiles: list
    s: np.ndarray  # sqrt(Q)
    e: np.ndarray  # energies

    @classmethod
    def from_results(cls, K, results, mode: str = "cell") -> "Library":
        keep = [r for r in results if r.profile is not None and math.isfinite(r.value)]
        # a zero value is the extrapolated y = 0 limit: the frontier point (0, 0)
        s = np.array([math.sqrt(r.q) if r.value > 0 else 0.0 for r in keep])
        e = np.array([r.value for r in keep])
        return cls([math.sqrt(2 * r.q) for r in keep], [r.profile for r in keep], s, e)

    def extend(self, K, y: float, mode: str = "cell") -> None:
        r = tails.i1(K, y, mode=mode)
        if r.profile is not None and math.isfinite(r.value):
            self.ys.append(y)
            self.profiles.append(r.profile)
            self.s = np.append(self.s, math.sqrt(r.q) if r.value > 0 else 0.0)
            self.e = np.append(self.e, r.value)


def i_n(K, y: float, n: int, library: Library | None = None, mode: str = "cell",
        margin: float = 1e-6) -> tuple[float, MixtureProblem | None]:
    """``I_n(y)`` over a library of ``I_1`` minimizers (built on demand)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    Kf = core.as_kernel(K)
    if abs(y) >= math.sqrt(2 * Kf.k0):
        return math.inf, None
    if library is None:
        library = Library([], [], np.zeros(0), np.zeros(0))
    if not any(abs(t - abs(y)) < 1e-12 for t in library.ys):
        library.extend(K, abs(y), mode)
    target = abs(y) / math.sqrt(2) + margin
    if n == 1:
        r = tails.i1(K, y, mode=mode)
        if r.profile is None:
            return math.inf, None
        return r.value, MixtureProblem(1, np.array([1.0]), [r.profile], y,
                                       np.array([r.value]), np.array([r.q]))
    m = len(library.e)
    lp = optimize.linprog(library.e, A_ub=-library.s[None, :], b_ub=[-target],
                          A_eq=np.ones((1, m)), b_eq=[1.0], bounds=[(0, None)] * m, method="highs")
    if not lp.success:
        return math.inf, None
    w = np.where(lp.x > 1e-13, lp.x, 0.0)
    idx = list(np.argsort(-w)[: min(n, m)])
    idx = [i for i in idx if w[i] > 0] or [int(np.argmax(w))]
    weights = np.zeros(n)
    weights[: len(idx)] = w[idx]
    profiles = [library.profiles[i] for i in idx]
    profiles += [profiles[0]] * (n - len(profiles))
    mix = MixtureProblem(n, weights, profiles, y,
                         np.array([library.e[i] for i in idx] + [library.e[idx[0]]] * (n - len(idx))),
                         np.array([library.s[i] ** 2 for i in idx] + [library.s[idx[0]] ** 2] * (n - len(idx))))
    return float(np.dot(mix.alphas, mix.energies)), mix


# ---------------------------------------------------------------------------
# K*_r


@dataclass
class KStarResult:
    value: float
    mu: np.ndarray | None  # optimal node masses (times spacing), or the certificate
    sign: int
    unbounded: bool
    iterations: int
    converged: bool


def _qp_sup(W: core.FormOperator, u: np.ndarray, max_iter: int, tol: float) -> tuple[float, np.ndarray, bool, int, bool]:
    """``sup_{p >= 0} (u, p) - 1/2 p^T W p`` by spectral projected gradient."""
    conv = lambda p: W.conv(p) / W.h  # sum_j w_|i-j| p_j
    up = np.maximum(u, 0.0)
    if not np.any(up > 0):
        return 0.0, np.zeros_like(u), False, 0, True
    Wp = conv(up)
    curv = float(np.dot(up, Wp))
    lin = float(np.dot(u, up))
    if curv <= 1e-300:
        return math.inf, up, True, 0, True
    p = up * (lin / curv)
    Wp = Wp * (lin / curv)
    obj = lambda p, Wp: float(np.dot(u, p)) - 0.5 * float(np.dot(p, Wp))
    f = obj(p, Wp)
    g = Wp - u  # gradient of the minimized function
    step = 1.0 / max(float(np.max(np.abs(W.w))), 1e-300)
    hist = [f]
    scale = float(np.max(np.abs(u)))
    for it in range(1, max_iter + 1):
        pg = p - np.maximum(p - g, 0.0)
        if float(np.max(np.abs(pg))) <= tol * scale:
            return f, p, False, it, True
        d = np.maximum(p - step * g, 0.0) - p
        Wd = conv(d)
        gd = float(np.dot(g, d))
        t = 1.0
        ref = max(hist[-10:])
        while True:
            pn = p + t * d
            Wpn = Wp + t * Wd
            fn = obj(pn, Wpn)
            if -fn <= -ref + 1e-4 * t * gd or t < 1e-12:
                break
            t *= 0.5
        gn = Wpn - u
        s, yv = pn - p, gn - g
        sy = float(np.dot(s, yv))
        step = float(np.dot(s, s)) / sy if sy > 0 else 1e10 * step
        step = min(max(step, 1e-30), 1e30)
        p, Wp, g, f = pn, Wpn, gn, fn
        hist.append(f)
        if it > 100 and f - hist[-51] <= 1e-13 * max(abs(f), 1e-300):
            return f, p, False, it, True  # objective has stalled at rounding level
        mass = float(p.sum())
        if mass > 0 and float(np.dot(p, Wp)) <= 1e-13 * mass * mass * abs(W.w[0]) and float(np.dot(u, p)) > 0:
            return math.inf, p, True, it, True
        if f > 1e15 * max(1.0, scale):
            return math.inf, p, True, it, True
    return f, p, False, max_iter, False


def kstar(K, u: np.ndarray, r: float, mode: str = "point", max_iter: int = 20000,
          tol: float = 1e-11) -> KStarResult:
    """``K*_r(u) = sup_mu (u, mu)^2 / (2 (K * mu, mu))`` over non-negative grid measures.

    ``u`` holds values at all ``n + 1`` nodes of ``I_r``.  The supremum equals
    ``max(QP(u), QP(-u))`` with ``QP(u) = sup_{mu >= 0} (u, mu) - (K * mu, mu)/2``.
    """
    u = np.asarray(u, dtype=float)
    n = u.size - 1
    h = 2 * r / n
    if not np.any(u != 0):
        return KStarResult(0.0, np.zeros_like(u), 0, False, 0, True)
    W = core.FormOperator(K, h, u.size, mode)
    best = None
    for sign in (1, -1):
        val, p, unb, its, ok = _qp_sup(W, sign * u, max_iter, tol)
        if best is None or val > best.value:
            best = KStarResult(val, p, sign, unb, its, ok)
    return best


# ---------------------------------------------------------------------------
# optimal profiles


@dataclass
class OptimalProfiles:
    us: list  # node values on each profile's grid
    S: float  # sum alpha_i sqrt(Q_i)
    value: float  # y^2 / (2 S^2), with 0/0 = 0
    constraint: float  # sum alpha_i (u_i, f_i^2)
    kstar_values: list = field(default_factory=list)


def optimal_profiles(mix: MixtureProblem, K, y: float, mode: str = "point",
                     check: bool = False) -> OptimalProfiles:
    """Minimizers ``u_i`` of ``max_i K*(u_i)`` under ``sum alpha_i (u_i, f_i^2) = y``."""
    qs, convs = [], []
    for p in mix.profiles:
        h = p.spacing
        op = core.FormOperator(K, h, p.values.size, mode)
        g = p.values ** 2
        c = op.conv(g)
        convs.append(c)
        qs.append(h * float(np.dot(c, g)))
    a = mix.alphas
    active = a > 0
    S = float(sum(ai * math.sqrt(max(q, 0.0)) for ai, q in zip(a, qs)))
    us = []
    if S > 0:
        for ai, q, c in zip(a, qs, convs):
            us.append(np.zeros_like(c) if ai == 0 else y * c / (S * math.sqrt(q)))
        value = y * y / (2 * S * S)
    else:
        # every active profile has Q = 0; constants carry the constraint
        n_active = int(active.sum())
        for ai, c in zip(a, convs):
            us.append(np.zeros_like(c) if ai == 0 else np.full_like(c, y / (ai * n_active)))
        value = 0.0 if y == 0 else math.inf
    cons = float(sum(ai * p.spacing * float(np.dot(u, p.values ** 2))
                     for ai, u, p in zip(a, us, mix.profiles)))
    out = OptimalProfiles(us, S, value, cons)
    if check:
        out.kstar_values = [kstar(K, u, p.r, mode).value if ai > 0 else 0.0
                            for ai, u, p in zip(a, us, mix.profiles)]
    return out
