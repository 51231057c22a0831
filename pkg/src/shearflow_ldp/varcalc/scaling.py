"""Riesz forms, the Gagliardo-Nirenberg constant and near-origin scaling of ``J``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, optimize, signal

from . import core, lam, rate


# ---------------------------------------------------------------------------
# Riesz quadratic form


def riesz_quadratic(f: core.Profile, beta: float) -> float:
    """``(I_beta(f^2), f^2)`` with ``I_beta g(x) = int g(y) |x - y|^-beta dy``.

    Off-diagonal pairs use point values of ``|x - y|^-beta``; the singular
    diagonal cell is integrated exactly, ``int_{|u| < h/2} |u|^-beta du``.
    """
    if not 0 < beta < 1:
        raise ValueError("beta must lie in ]0, 1[")
    h = f.spacing
    g = f.values ** 2
    m = g.size
    k = np.arange(1, m, dtype=float)
    w = np.empty(m)
    w[0] = 2 * (h / 2) ** (1 - beta) / (1 - beta) / h
    w[1:] = (k * h) ** (-beta)
    full = np.concatenate([w[:0:-1], w])
    conv = signal.fftconvolve(full, g, mode="valid") if m > 256 else np.convolve(full, g, mode="valid")
    return h * h * float(np.dot(conv, g))


def riesz_box_exact(beta: float, r: float = 1.0) -> float:
    """Closed form for the normalized indicator of ``I_r``."""
    return 0.5 * (2 * r) ** (2 - beta) / ((1 - beta) * (2 - beta)) / r


# ---------------------------------------------------------------------------
# Gagliardo-Nirenberg


def gn_ratio(f: core.Profile) -> float:
    """``||f'||^2 / ||f||_4^8`` for a unit profile."""
    return 2 * f.energy() / f.l4_4() ** 2


@dataclass
class GNResult:
    value: float
    values: list  # per resolution
    spacings: list
    profile: core.Profile
    extra: dict = field(default_factory=dict)


def gn_constant(points_per_width=(24, 48, 96), box_widths: float = 16.0) -> GNResult:
    """``I = inf ||f'||^2 / ||f||_4^8`` over unit profiles.

    The maximizer of ``sqrt(2) ||f||_4^2 - e(f)`` (the local-kernel version of
    ``Lambda``) minimizes the dilation-invariant ratio.  It is computed at
    three resolutions and extrapolated in the spacing (second order).
    """
    K = core.LocalKernel()
    width = lam.pilot_scale(K, 1.0, mode="point")
    vals, hs = [], []
    prof = None
    for ppw in points_per_width:
        h = width / ppw
        n = int(round(2 * box_widths * width / h))
        res = lam.lambda_of_alpha(K, 1.0, n * h / 2, n_grid=n, mode="point", starts=("bump",))
        prof = res.profile
        vals.append(gn_ratio(prof))
        hs.append(h)
    ext = vals[-1] + (vals[-1] - vals[-2]) / 3.0
    return GNResult(ext, vals, hs, prof, {"width": width})


def sech_ratio(p: float) -> float:
    """Dilation-invariant ratio ``||g'||^2 ||g||_2^6 / ||g||_4^8`` of ``g = sech(x)^p``."""
    sech = lambda x: 2 * np.exp(-x) / (1 + np.exp(-2 * x))
    g2 = lambda x: sech(x) ** (2 * p)
    d2 = lambda x: (p * np.tanh(x)) ** 2 * sech(x) ** (2 * p)
    g4 = lambda x: sech(x) ** (4 * p)
    quad = lambda fn: 2 * integrate.quad(fn, 0, np.inf, epsabs=0, epsrel=1e-13, limit=400)[0]
    return quad(d2) * quad(g2) ** 3 / quad(g4) ** 2


def sech_oracle() -> tuple[float, float]:
    """Line search over the exponent ``p`` of ``sech^p``; returns (ratio, p)."""
    res = optimize.minimize_scalar(sech_ratio, bounds=(0.3, 3.0), method="bounded",
                                   options={"xatol": 1e-10})
    return float(res.fun), float(res.x)


# ---------------------------------------------------------------------------
# dilation isometry


def isometry_check(K, f: core.Profile, lam_: float, mode: str = "point") -> tuple[tuple[float, float], tuple[float, float]]:
    """Objective pieces ``(e, Q)`` of ``f_lam`` against ``(lam^2 e(f), Q_{K(./lam)}(f))``."""
    Kf = core.as_kernel(K)
    fl = f.dilate(lam_)
    lhs = (fl.energy(), core.quadratic_form(Kf, fl, mode))
    rhs = (lam_ ** 2 * f.energy(), core.quadratic_form(Kf.scaled(lam_), f, mode))
    return lhs, rhs


# ---------------------------------------------------------------------------
# scaling fits


@dataclass
class ScalingResult:
    exponent: float
    prefactor: float
    ys: np.ndarray
    js: np.ndarray
    plateau: float | None = None
    plateau_target: float | None = None
    table: rate.RateTable | None = None


def scaling_alphas(lo: float, hi: float, n: int = 60) -> np.ndarray:
    return np.concatenate([[0.0], np.geomspace(lo, hi, n)])


def scaling_analysis(K, y_grid: Sequence[float], alphas: Sequence[float] | None = None,
                     table: rate.RateTable | None = None, gn: float | None = None,
                     workers: int = 1, decade: bool = True) -> ScalingResult:
    """Log-log fit of ``J(y) ~ C |y|^p`` on ``y_grid``.

    With ``decade`` the fit uses only ``[y_min, 10 y_min]``, ``y_min`` being
    the smallest usable point, since the power law holds as ``y -> 0``.

    For an integrable kernel the plateau ``J(y)/y^4`` (mean over the grid) is
    reported next to ``I / (8 Kbar^2)``.
    """
    ys = np.asarray(sorted(abs(float(y)) for y in y_grid))
    Kf = core.as_kernel(K)
    if table is None:
        if alphas is None:
            alphas = rate.default_alphas()
        table = rate.build_rate_table(Kf, alphas, workers=workers)
    js = np.array([rate.legendre_transform(table, y) for y in ys])
    use = (ys > 0) & np.isfinite(js) & (js > 0)
    if decade and use.any():
        y_min = ys[use].min()
        use &= ys <= 10 * y_min * (1 + 1e-12)
    if use.sum() < 4:
        raise ValueError("fewer than 4 usable y points for the fit")
    slope, icpt = np.polyfit(np.log(ys[use]), np.log(js[use]), 1)
    out = ScalingResult(float(slope), float(math.exp(icpt)), ys, js, table=table)
    if Kf.integral is not None and Kf.integral != 0:
        out.plateau = float(np.mean(js[use] / ys[use] ** 4))
        g = gn if gn is not None else gn_constant().value
        out.plateau_target = g / (8 * Kf.integral ** 2)
    return out
