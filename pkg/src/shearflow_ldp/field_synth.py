"""Stationary centered Gaussian fields on the line.

The field law is given by its spectral density ``h`` (so that
``K(x) = int exp(i lam x) h(lam) dlam``).  This module turns ``h`` into
sampled covariance kernels, draws field realizations by truncated spectral
superposition, validates them empirically, and performs the compact-support
splitting ``v = v_L + v_tilde`` obtained by cutting the moving-average kernel
``g`` (the transform of ``sqrt(h)``) with a smooth bump.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import fft as sfft
from scipy import integrate, special

from . import rng as _rng

FAMILIES = ("gaussian", "cauchy", "matern_power", "table")

# samples per RNG block; sample i lives in block i // FIELD_BLOCK
FIELD_BLOCK = 64


# ---------------------------------------------------------------------------
# spectral densities


@dataclass(frozen=True)
class SpectralDensity:
    """Parametric spectral density ``h``.

    Built-in families (``variance`` and ``length`` default to 1):

    ``gaussian``      K(x) = variance * exp(-x^2 / (2 length^2))
    ``cauchy``        K(x) = variance * exp(-|x| / length)
    ``matern_power``  K(x) = variance * (1 + (x/length)^2)^(-beta/2)
    ``table``         knots ``lam >= 0`` and values ``h``; linear in between,
                      zero beyond the last knot, evaluated at ``|lam|``.
    """

    family: str
    params: dict = field(default_factory=dict)
    alpha_moment: float = 0.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown spectral family {self.family!r}")
        if self.alpha_moment <= 0:
            raise ValueError("alpha_moment must be positive")
        p = self.params
        if self.family == "table":
            lam = np.asarray(p.get("lambda", ()), dtype=float)
            hv = np.asarray(p.get("h", ()), dtype=float)
            if lam.ndim != 1 or lam.shape != hv.shape or lam.size < 2:
                raise ValueError("table density needs matching 'lambda' and 'h' arrays")
            if np.any(np.diff(lam) <= 0) or lam[0] < 0:
                raise ValueError("table knots must be non-negative and increasing")
            if np.any(hv < 0) or not np.all(np.isfinite(hv)):
                raise ValueError("table density values must be finite and >= 0")
        else:
            for key in ("variance", "length") + (("beta",) if self.family == "matern_power" else ()):
                if key == "beta" and key not in p:
                    raise ValueError("matern_power needs a 'beta' parameter")
                val = p.get(key, 1.0)
                if not (val > 0 and math.isfinite(val)):
                    raise ValueError(f"parameter {key} must be a positive real")
        moment = self.moment_integral()
        if not math.isfinite(moment):
            raise ValueError(f"moment condition fails for {self.family}: integral diverges")

    # -- parameters
    @property
    def variance(self) -> float:
        return float(self.params.get("variance", 1.0))

    @property
    def length(self) -> float:
        return float(self.params.get("length", 1.0))

    @property
    def beta(self) -> float:
        return float(self.params["beta"])

    def __call__(self, lam) -> np.ndarray:
        lam = np.abs(np.asarray(lam, dtype=float))
        v, ell = self.variance, self.length
        if self.family == "gaussian":
            return v * ell / math.sqrt(2 * math.pi) * np.exp(-0.5 * (ell * lam) ** 2)
        if self.family == "cauchy":
            return v * ell / (math.pi * (1.0 + (ell * lam) ** 2))
        if self.family == "matern_power":
            s = 0.5 * self.beta
            nu = s - 0.5
            u = ell * lam
            with np.errstate(divide="ignore", invalid="ignore"):
                out = u ** nu * special.kv(nu, u) / (math.sqrt(math.pi) * special.gamma(s) * 2.0 ** nu)
            out = np.where(u > 0, out, np.inf if nu < 0 else _matern_at_zero(s))
            return v * ell * np.nan_to_num(out, nan=0.0, posinf=np.inf)
        knots = np.asarray(self.params["lambda"], dtype=float)
        vals = np.asarray(self.params["h"], dtype=float)
        return np.interp(lam, knots, vals, left=vals[0], right=0.0) * (lam <= knots[-1])

    def total_mass(self) -> float:
        """``int h`` over the whole line, which is ``K(0)``."""
        if self.family in ("gaussian", "cauchy", "matern_power"):
            return self.variance
        knots = np.asarray(self.params["lambda"], dtype=float)
        vals = np.asarray(self.params["h"], dtype=float)
        return 2.0 * float(np.trapezoid(vals, knots))

    def tail_mass(self, cutoff: float) -> float:
        """``int_{|lam| > cutoff} h``."""
        v, ell = self.variance, self.length
        if self.family == "gaussian":
            return v * math.erfc(ell * cutoff / math.sqrt(2))
        if self.family == "cauchy":
            return v * (1.0 - 2.0 / math.pi * math.atan(ell * cutoff))
        if self.family == "table":
            knots = np.asarray(self.params["lambda"], dtype=float)
            if cutoff >= knots[-1]:
                return 0.0
            fine = np.linspace(cutoff, knots[-1], 4097)
            return 2.0 * float(np.trapezoid(self(fine), fine))
        val, _ = integrate.quad(lambda t: float(self(t)), cutoff, np.inf, limit=200)
        return 2.0 * val

    def cutoff_for(self, rel_tol: float) -> float:
        """Smallest ``Lambda`` (to 1%) with tail mass below ``rel_tol * int h``."""
        target = rel_tol * self.total_mass()
        if self.family == "table":
            knots = np.asarray(self.params["lambda"], dtype=float)
            hi = float(knots[-1])
        else:
            hi = 1.0 / self.length
            while self.tail_mass(hi) > target:
                hi *= 2.0
                if hi > 1e12:
                    raise ValueError("spectral tail does not decay: density not integrable")
        lo = 0.0
        while hi - lo > 0.01 * hi:
            mid = 0.5 * (lo + hi)
            if self.tail_mass(mid) > target:
                lo = mid
            else:
                hi = mid
        return hi

    def moment_integral(self) -> float:
        """``int (1 + |lam|^alpha) h(lam) dlam``; finite for admissible densities."""
        a = self.alpha_moment
        if self.family == "table":
            knots = np.asarray(self.params["lambda"], dtype=float)
            fine = np.linspace(0.0, knots[-1], 8193)
            return 2.0 * float(np.trapezoid((1 + fine ** a) * self(fine), fine))
        f = lambda t: (1.0 + t ** a) * float(self(t))
        if self.family == "matern_power":
            head, _ = integrate.quad(f, 0.0, 1.0, limit=200)
            tail, _ = integrate.quad(f, 1.0, np.inf, limit=200)
            val = head + tail
        else:
            val, _ = integrate.quad(f, 0.0, np.inf, limit=400)
        return 2.0 * val

    def analytic_covariance(self, x) -> np.ndarray | None:
        """Closed-form ``K`` for the parametric families, ``None`` for tables."""
        x = np.abs(np.asarray(x, dtype=float))
        v, ell = self.variance, self.length
        if self.family == "gaussian":
            return v * np.exp(-0.5 * (x / ell) ** 2)
        if self.family == "cauchy":
            return v * np.exp(-x / ell)
        if self.family == "matern_power":
            return v * (1.0 + (x / ell) ** 2) ** (-0.5 * self.beta)
        return None

    # -- persistence
    def to_json(self) -> dict:
        if self.family == "table":
            return {"family": "table",
                    "lambda": [float(t) for t in self.params["lambda"]],
                    "h": [float(t) for t in self.params["h"]],
                    "alpha_moment": self.alpha_moment}
        return {"family": self.family, "params": dict(self.params), "alpha_moment": self.alpha_moment}

    @classmethod
    def from_json(cls, obj: dict) -> "SpectralDensity":
        obj = dict(obj)
        family = obj.pop("family")
        alpha = float(obj.pop("alpha_moment", 0.5))
        if family == "table":
            params = {"lambda": list(obj.pop("lambda")), "h": list(obj.pop("h"))}
        else:
            params = dict(obj.pop("params", {}))
        if obj:
            raise ValueError(f"unknown keys in density spec: {sorted(obj)}")
        return cls(family, params, alpha)

    @property
    def density_id(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _matern_at_zero(s: float) -> float:
    # limit of u^nu K_nu(u) at 0 for nu > 0 is Gamma(nu) 2^(nu-1)
    nu = s - 0.5
    if nu == 0:
        return np.inf
    return special.gamma(nu) * 2.0 ** (nu - 1) / (math.sqrt(math.pi) * special.gamma(s) * 2.0 ** nu)


def gaussian_density(variance: float = 1.0, length: float = 1.0) -> SpectralDensity:
    return SpectralDensity("gaussian", {"variance": variance, "length": length})


def cauchy_density(variance: float = 1.0, length: float = 1.0) -> SpectralDensity:
    return SpectralDensity("cauchy", {"variance": variance, "length": length})


def matern_power_density(beta: float, variance: float = 1.0, length: float = 1.0) -> SpectralDensity:
    return SpectralDensity("matern_power", {"beta": beta, "variance": variance, "length": length})


def load_density(path: str | Path) -> SpectralDensity:
    with open(path) as fh:
        return SpectralDensity.from_json(json.load(fh))


def save_density(h: SpectralDensity, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(h.to_json(), fh, indent=2)


# ---------------------------------------------------------------------------
# covariance kernels


@dataclass
class CovarianceKernel:
    """Even kernel sampled at lags ``k * grid_spacing``, ``|k| <= n``."""

    grid_spacing: float
    half_width: float
    values: np.ndarray
    k0: float
    support_bound: float | None = None
    stderr: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size % 2 != 1:
            raise ValueError("kernel values must be an odd-length 1-D array centred on lag 0")

    @property
    def n_half(self) -> int:
        return self.values.size // 2

    @property
    def lags(self) -> np.ndarray:
        return self.grid_spacing * np.arange(-self.n_half, self.n_half + 1)

    def at(self, x) -> np.ndarray:
        """Linear interpolation at arbitrary lags inside the window."""
        x = np.abs(np.asarray(x, dtype=float))
        if np.any(x > self.half_width * (1 + 1e-12)):
            raise ValueError("lag outside the kernel window")
        return np.interp(x, self.lags[self.n_half:], self.values[self.n_half:])

    @classmethod
    def from_function(cls, func, half_width: float, spacing: float, name: str = "") -> "CovarianceKernel":
        n = int(round(half_width / spacing))
        lags = spacing * np.arange(0, n + 1)
        vals = np.asarray(func(lags), dtype=float)
        full = np.concatenate([vals[:0:-1], vals])
        return cls(spacing, n * spacing, full, float(vals[0]), name=name)


def _lam_max(cutoff: float, spacing: float) -> float:
    # integer multiple of pi/spacing, so that sin(lam_max * x) vanishes on the lag grid
    return max(1, math.ceil(cutoff * spacing / math.pi)) * math.pi / spacing


def _cosine_transform(func, cutoff: float, spacing: float, half_width: float,
                      rtol: float = 1e-8, oversample: float = 4.0,
                      tail_mass: float = 0.0, tail_slope=None, max_len: int = 1 << 24):
    """``2 int_0^cutoff cos(lam x) func(lam) dlam`` at ``x = k*spacing``, ``0 <= k <= n``.

    Composite trapezoid rule evaluated at all lags at once with a type-I DCT.
    The frequency step is halved until successive results agree to ``rtol``
    (relative to the value at lag 0).  ``tail_mass`` is added at lag 0 and the
    leading integration-by-parts term of the truncated tail elsewhere.
    """
    n = int(round(half_width / spacing))
    lam_max = _lam_max(cutoff, spacing)
    m = max(64, int(2 ** math.ceil(math.log2(lam_max * oversample * half_width / math.pi + 1))))
    prev = None
    while True:
        if m * 1.0 > max_len:
            raise ValueError("cosine-transform quadrature did not converge within the size cap")
        lam = np.linspace(0.0, lam_max, m + 1)
        fv = np.asarray(func(lam), dtype=float)
        if not np.all(np.isfinite(fv)):
            raise ValueError("density is not finite on the quadrature grid")
        # dct type 1: y_j = f_0 + (-1)^j f_m + 2 sum_{k=1}^{m-1} f_k cos(pi k j / m)
        y = sfft.dct(fv, type=1)
        dl = lam_max / m
        stride = int(round(lam_max * spacing / math.pi))
        vals = y[: (n + 1) * stride: stride][: n + 1] * dl
        if vals.size < n + 1:
            raise ValueError("lag window exceeds the quadrature period")
        if prev is not None and np.max(np.abs(vals - prev)) <= rtol * max(abs(vals[0]), 1e-300):
            break
        prev = vals
        m *= 2
    x = spacing * np.arange(n + 1)
    vals = vals.copy()
    vals[0] += tail_mass
    if tail_slope is not None and x.size > 1:
        # int_L^inf cos(lam x) f dlam ~ -f(L) sin(L x) / x
        vals[1:] += -2.0 * tail_slope * np.sin(lam_max * x[1:]) / x[1:]
    return vals


def covariance_from_density(h: SpectralDensity, half_width: float, spacing: float,
                            rtol: float = 1e-8, tail_rel: float = 1e-4) -> CovarianceKernel:
    """Sample ``K = FT(h)`` on ``[-half_width, half_width]`` with step ``spacing``.

    The heavy-tailed ``matern_power`` family has an integrable singularity of
    ``h`` at the origin; its closed-form ``K`` is used instead of quadrature.
    """
    if not (half_width > 0 and spacing > 0):
        raise ValueError("half_width and spacing must be positive")
    if h.family == "matern_power":
        n = int(round(half_width / spacing))
        vals = h.analytic_covariance(spacing * np.arange(n + 1))
    else:
        cutoff = h.cutoff_for(tail_rel)
        lam_max = _lam_max(cutoff, spacing)
        vals = _cosine_transform(h, cutoff, spacing, half_width, rtol=rtol,
                                 tail_mass=h.tail_mass(lam_max), tail_slope=float(h(lam_max)))
    k0 = float(vals[0])
    vals = np.clip(vals, -k0, k0)
    full = np.concatenate([vals[:0:-1], vals])
    return CovarianceKernel(spacing, spacing * (vals.size - 1), full, k0, name=h.family)


# ---------------------------------------------------------------------------
# field samples


@dataclass
class FieldSample:
    grid_spacing: float
    origin: float
    values: np.ndarray
    seed: int
    density_id: str
    index: int = 0
    stream: str = "sample_field"

    @property
    def count(self) -> int:
        return int(self.values.size)

    @property
    def x(self) -> np.ndarray:
        return self.origin + self.grid_spacing * np.arange(self.count)

    def __call__(self, x) -> np.ndarray:
        """Linear interpolation; points off the grid are clamped to the end values."""
        return np.interp(x, self.x, self.values)


@dataclass(frozen=True)
class Grid:
    origin: float
    spacing: float
    count: int

    def __post_init__(self):
        if self.spacing <= 0 or self.count < 2:
            raise ValueError("grid needs positive spacing and at least two points")

    @property
    def extent(self) -> float:
        return self.spacing * (self.count - 1)

    @property
    def x(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.count)

    @classmethod
    def symmetric(cls, half_width: float, spacing: float) -> "Grid":
        n = int(round(half_width / spacing))
        return cls(-n * spacing, spacing, 2 * n + 1)


@dataclass(frozen=True)
class SynthesisPlan:
    """Frequency layout for spectral superposition on one grid."""

    dlam: float
    n_freq: int
    fft_len: int
    amplitudes: np.ndarray
    cutoff: float


def synthesis_plan(h: SpectralDensity, grid: Grid, tail_rel: float = 1e-6,
                   oversample: float = 2.0) -> SynthesisPlan:
    cutoff = h.cutoff_for(tail_rel)
    if cutoff > math.pi / grid.spacing:
        raise ValueError(
            f"grid spacing {grid.spacing} aliases the spectrum: need spacing <= "
            f"{math.pi / cutoff:.4g} to resolve frequencies up to {cutoff:.4g}")
    # frequency step no larger than pi / extent; the FFT length fixes it exactly
    fft_len = sfft.next_fast_len(int(math.ceil(2 * oversample * max(grid.extent, grid.spacing) / grid.spacing)) + 1)
    dlam = 2 * math.pi / (fft_len * grid.spacing)
    n_freq = int(math.ceil(cutoff / dlam))
    lam = (np.arange(n_freq) + 0.5) * dlam
    amp = np.sqrt(2.0 * h(lam) * dlam)
    if not np.all(np.isfinite(amp)):
        raise ValueError("density not finite at the synthesis frequencies")
    return SynthesisPlan(dlam, n_freq, fft_len, amp, cutoff)


def _synthesize(plan: SynthesisPlan, grid: Grid, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """``sum_k a_k (xi_k cos(lam_k x) + eta_k sin(lam_k x))`` on the grid, rows = samples."""
    k = np.arange(plan.n_freq)
    coef = plan.amplitudes * (xi - 1j * eta) * np.exp(1j * k * plan.dlam * grid.origin)
    out = np.empty((coef.shape[0], grid.count))
    chunk = max(1, (1 << 22) // plan.fft_len)
    phase = np.exp(0.5j * plan.dlam * grid.x)
    for s in range(0, coef.shape[0], chunk):
        buf = np.zeros((min(chunk, coef.shape[0] - s), plan.fft_len), dtype=complex)
        buf[:, : plan.n_freq] = coef[s: s + chunk]
        z = sfft.ifft(buf, axis=1, norm="forward")[:, : grid.count]
        out[s: s + chunk] = (z * phase).real
    return out


def field_block(h: SpectralDensity, grid: Grid, seed: int, block: int,
                plan: SynthesisPlan | None = None, stream: str = "sample_field") -> np.ndarray:
    """All ``FIELD_BLOCK`` samples of one RNG block as a ``(FIELD_BLOCK, count)`` array."""
    plan = plan or synthesis_plan(h, grid)
    gen = _rng.generator(seed, stream, block)
    z = gen.standard_normal((FIELD_BLOCK, 2, plan.n_freq))
    return _synthesize(plan, grid, z[:, 0], z[:, 1])


def sample_array(h: SpectralDensity, grid: Grid, seed: int, n: int, start: int = 0,
                 stream: str = "sample_field", workers: int = 1) -> np.ndarray:
    """Samples ``start .. start+n-1`` as an ``(n, count)`` array."""
    if n <= 0:
        return np.empty((0, grid.count))
    plan = synthesis_plan(h, grid)
    first, last = start // FIELD_BLOCK, (start + n - 1) // FIELD_BLOCK
    blocks = list(range(first, last + 1))
    parts = _rng.parallel_map(lambda b: field_block(h, grid, seed, b, plan, stream), blocks, workers)
    arr = np.concatenate(parts, axis=0)
    off = start - first * FIELD_BLOCK
    return arr[off: off + n]


def sample_field(h: SpectralDensity, grid: Grid | tuple, seed: int, n: int,
                 workers: int = 1, start: int = 0) -> list[FieldSample]:
    """``n`` independent realizations of the field on ``grid = (origin, spacing, count)``."""
    if not isinstance(grid, Grid):
        grid = Grid(*grid)
    arr = sample_array(h, grid, seed, n, start=start, workers=workers)
    did = h.density_id
    return [FieldSample(grid.spacing, grid.origin, arr[i], seed, did, start + i) for i in range(arr.shape[0])]


def empirical_covariance(samples: Sequence[FieldSample], max_lag: float) -> CovarianceKernel:
    """Cross-site average of ``v(x) v(x + lag)`` (known zero mean) with standard errors."""
    if len(samples) < 2:
        raise ValueError("need at least two samples")
    s0 = samples[0]
    for s in samples[1:]:
        if s.count != s0.count or not math.isclose(s.grid_spacing, s0.grid_spacing, rel_tol=1e-12):
            raise ValueError("samples are on mismatched grids")
    m = int(round(max_lag / s0.grid_spacing))
    if m >= s0.count:
        raise ValueError("max_lag exceeds the sample grid")
    arr = np.stack([s.values for s in samples])
    per = np.empty((arr.shape[0], m + 1))
    for k in range(m + 1):
        per[:, k] = np.mean(arr[:, : arr.shape[1] - k] * arr[:, k:], axis=1)
    est = per.mean(axis=0)
    se = per.std(axis=0, ddof=1) / math.sqrt(arr.shape[0])
    full = np.concatenate([est[:0:-1], est])
    full_se = np.concatenate([se[:0:-1], se])
    return CovarianceKernel(s0.grid_spacing, m * s0.grid_spacing, full, float(est[0]),
                            stderr=full_se, name="empirical")


# ---------------------------------------------------------------------------
# compact-support splitting


@dataclass(frozen=True)
class CutoffSpec:
    """Smooth even bump: 1 on [-1/4, 1/4], 0 outside ]-1/2, 1/2[.

    The transition is the standard C-infinity step built from ``exp(-a/t)``
    with ``a = sharpness``.
    """

    sharpness: float = 1.0

    def __call__(self, x) -> np.ndarray:
        ax = np.abs(np.asarray(x, dtype=float))
        t = np.clip((0.5 - ax) / 0.25, 0.0, 1.0)
        a = self.sharpness
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            up = np.where(t > 0, np.exp(-a / np.where(t > 0, t, 1.0)), 0.0)
            dn = np.where(t < 1, np.exp(-a / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
            out = up / (up + dn)
        out = np.where(ax <= 0.25, 1.0, out)
        return np.where(ax >= 0.5, 0.0, out)


@dataclass
class CutoffSplit:
    L: float
    psi: CutoffSpec
    x: np.ndarray
    g: np.ndarray
    g_L: np.ndarray
    g_tilde: np.ndarray


@dataclass
class SplitResult:
    v: FieldSample
    v_L: FieldSample
    v_tilde: FieldSample
    K_L: CovarianceKernel
    k_tilde0: float
    K_tilde: CovarianceKernel
    K_cross: CovarianceKernel
    K_full: CovarianceKernel
    split: CutoffSplit

    def __iter__(self):
        return iter((self.v_L, self.v_tilde, self.K_L, self.k_tilde0))


def moving_average_kernel(h: SpectralDensity, spacing: float, half_width: float) -> np.ndarray:
    """``g`` with ``g * g = K``: the transform of ``sqrt(h / 2 pi)`` at lags 0..half_width."""
    root = lambda lam: np.sqrt(np.asarray(h(lam)) / (2 * math.pi))
    cutoff = h.cutoff_for(1e-12) if h.family == "gaussian" else h.cutoff_for(1e-6)
    return _cosine_transform(root, cutoff, spacing, half_width, rtol=1e-10)


def _autocorr(a: np.ndarray, b: np.ndarray, spacing: float, n_lag: int) -> np.ndarray:
    full = np.correlate(b, a, mode="full") * spacing
    c = full.size // 2
    return full[c - n_lag: c + n_lag + 1]


def split_field(h: SpectralDensity, L: float, grid: Grid | tuple, seed: int,
                cutoff: CutoffSpec = CutoffSpec(), g_half_width: float | None = None) -> SplitResult:
    """Split ``v = v_L + v_tilde`` with ``g_L = psi(x/L) g`` driven by the same white noise."""
    if not isinstance(grid, Grid):
        grid = Grid(*grid)
    s = grid.spacing
    if L < 4 * s:
        raise ValueError("L must span at least four grid spacings to resolve the cutoff")
    if g_half_width is None:
        g_half_width = max(0.5 * L, 12.0 * h.length)
    n_g = int(math.ceil(g_half_width / s))
    gpos = moving_average_kernel(h, s, n_g * s)
    xg = s * np.arange(-n_g, n_g + 1)
    g = np.concatenate([gpos[:0:-1], gpos])
    psi = cutoff(xg / L)
    g_L = psi * g
    g_t = g - g_L
    gen = _rng.generator(seed, "split_field", 0)
    noise = gen.standard_normal(grid.count + 2 * n_g) * math.sqrt(s)
    conv = lambda k: np.convolve(noise, k, mode="valid")
    did = h.density_id
    mk = lambda vals, tag: FieldSample(s, grid.origin, vals, seed, did, 0, f"split_field:{tag}")
    v, v_L, v_t = conv(g), conv(g_L), conv(g_t)
    n_lag = 2 * n_g
    KL = _autocorr(g_L, g_L, s, n_lag)
    # exact zeros beyond L: products of exact zeros are exact zeros
    Kt = _autocorr(g_t, g_t, s, n_lag)
    Kc = 0.5 * (_autocorr(g_L, g_t, s, n_lag) + _autocorr(g_t, g_L, s, n_lag))
    Kf = _autocorr(g, g, s, n_lag)
    hw = n_lag * s
    kern = lambda vals, name, sb=None: CovarianceKernel(s, hw, vals, float(vals[n_lag]), support_bound=sb, name=name)
    return SplitResult(
        v=mk(v, "v"), v_L=mk(v_L, "v_L"), v_tilde=mk(v_t, "v_tilde"),
        K_L=kern(KL, "K_L", L), k_tilde0=float(s * np.sum(g_t ** 2)),
        K_tilde=kern(Kt, "K_tilde"), K_cross=kern(Kc, "K_cross"), K_full=kern(Kf, "K"),
        split=CutoffSplit(L, cutoff, xg, g, g_L, g_t))


# ---------------------------------------------------------------------------
# envelope law


@dataclass
class EnvelopeResult:
    L: np.ndarray
    ratios: np.ndarray  # shape (n_samples, n_L)

    @property
    def median(self) -> np.ndarray:
        return np.median(self.ratios, axis=0)

    def quantile(self, q: float) -> np.ndarray:
        return np.quantile(self.ratios, q, axis=0)

    def rows(self):
        return list(zip(self.L.tolist(), self.median.tolist(), self.quantile(0.95).tolist()))


def envelope_ratio(samples: Sequence[FieldSample], L_list: Sequence[float], k0: float) -> EnvelopeResult:
    """``max_{[-L, L]} |v| / sqrt(2 K(0) log L)`` per sample and per ``L``."""
    L_arr = np.asarray(L_list, dtype=float)
    if np.any(L_arr < math.e):
        raise ValueError("L must be at least e so that log L >= 1")
    out = np.empty((len(samples), L_arr.size))
    for i, smp in enumerate(samples):
        x = smp.x
        if L_arr.max() > min(-x[0], x[-1]) * (1 + 1e-12):
            raise ValueError("L exceeds the sample grid")
        for j, L in enumerate(L_arr):
            mask = np.abs(x) <= L
            out[i, j] = np.max(np.abs(smp.values[mask])) / math.sqrt(2 * k0 * math.log(L))
    return EnvelopeResult(L_arr, out)


# ---------------------------------------------------------------------------
# CSV persistence


def write_field_csv(sample: FieldSample, path: str | Path, extra_header: dict | None = None) -> None:
    header = {"origin": sample.origin, "spacing": sample.grid_spacing, "count": sample.count,
              "seed": sample.seed, "index": sample.index, "density": sample.density_id}
    header.update(extra_header or {})
    with open(path, "w") as fh:
        for k, v in header.items():
            fh.write(f"# {k}={v}\n")
        fh.write("x,v\n")
        for xv, vv in zip(sample.x, sample.values):
            fh.write(f"{xv:.17g},{vv:.17g}\n")


def read_field_csv(path: str | Path) -> FieldSample:
    meta = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    body = []
    for ln in lines:
        if ln.startswith("#"):
            k, _, v = ln[1:].strip().partition("=")
            meta[k] = v
        elif ln and not ln.startswith("x,"):
            body.append([float(t) for t in ln.split(",")])
    arr = np.asarray(body)
    return FieldSample(float(meta["spacing"]), float(meta["origin"]), arr[:, 1],
                       int(meta["seed"]), meta["density"], int(meta.get("index", 0)))
