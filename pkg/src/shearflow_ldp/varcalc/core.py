"""Profiles, kernels and the discrete quadratic forms shared by all solvers.

Conventions.  A box ``I_r = ]-r, r[`` carries a uniform grid with ``n``
sub-intervals (spacing ``h = 2r/n``); profiles store all ``n + 1`` nodal
values with zero ends.  Integrals are spacing-weighted sums, derivatives are
forward differences, so

    ||f||^2      = h * sum f_i^2
    e(f)         = 1/2 ||f'||^2 = 1/(2h) * sum (f_{i+1} - f_i)^2
    Q(f)         = (K * f^2, f^2) = h^2 * sum_ij w_|i-j| f_i^2 f_j^2

with lag weights ``w_k`` either point values ``K(k h)`` or, for grids that
are coarse relative to the kernel, the exact double integral of ``K`` against
the piecewise-linear interpolant of ``f^2`` (a cubic B-spline average).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import fft as sfft
from scipy import integrate, signal

from .. import field_synth as fs
from .. import schrodinger as sch

WEIGHT_MODES = ("point", "cell")


# ---------------------------------------------------------------------------
# kernels


@dataclass(frozen=True, eq=False)
class KernelFunction:
    """Even covariance ``K`` as a callable on lags, with a few summaries."""

    func: Callable[[np.ndarray], np.ndarray]
    k0: float
    name: str = ""
    integral: float | None = None  # int K over the line, when finite and known
    tail_beta: float | None = None  # K(x) ~ |x|^-tail_beta, when power-law
    length: float = 1.0  # correlation length, sets quadrature resolution

    def __call__(self, x) -> np.ndarray:
        return self.func(np.abs(np.asarray(x, dtype=float)))

    def scaled(self, lam: float) -> "KernelFunction":
        """``x -> K(x / lam)``."""
        integral = None if self.integral is None else lam * self.integral
        return KernelFunction(lambda x: self.func(np.abs(x) / lam), self.k0,
                              f"{self.name}/{lam:g}", integral, self.tail_beta, self.length * lam)


def gaussian_kernel(variance: float = 1.0, length: float = 1.0) -> KernelFunction:
    return KernelFunction(lambda x: variance * np.exp(-0.5 * (x / length) ** 2), variance,
                          "gaussian", variance * length * math.sqrt(2 * math.pi), None, length)


def power_kernel(beta: float, variance: float = 1.0, length: float = 1.0) -> KernelFunction:
    """``variance * (1 + (x/length)^2)^(-beta/2)``."""
    integral = None
    if beta > 1:
        from scipy.special import beta as B
        integral = variance * length * B(0.5, 0.5 * (beta - 1))
    return KernelFunction(lambda x: variance * (1.0 + (x / length) ** 2) ** (-0.5 * beta),
                          variance, f"power{beta:g}", integral, beta, length)


def kernel_from_covariance(K: fs.CovarianceKernel, zero_tol: float = 1e-14) -> KernelFunction:
    """Interpolated sampled kernel; zero beyond the window only when that is honest."""
    edge = abs(float(K.values[0]))
    vanishes = K.support_bound is not None or edge <= zero_tol * abs(K.k0)

    def func(x):
        x = np.abs(x)
        outside = x > K.half_width
        if np.any(outside) and not vanishes:
            raise ValueError("kernel window too small for the requested lags")
        out = np.zeros_like(x)
        out[~outside] = K.at(x[~outside])
        return out

    integral = float(np.trapezoid(K.values, K.lags)) if vanishes else None
    half = K.values[K.n_half:]
    below = np.nonzero(np.abs(half) < 0.5 * abs(K.k0))[0]
    length = K.grid_spacing * (below[0] if below.size else K.n_half)
    return KernelFunction(func, float(K.k0), K.name or "sampled", integral, None, max(length, K.grid_spacing))


def kernel_from_density(h: fs.SpectralDensity) -> KernelFunction:
    if h.family == "gaussian":
        return gaussian_kernel(h.variance, h.length)
    if h.family == "matern_power":
        return power_kernel(h.beta, h.variance, h.length)
    if h.family == "cauchy":
        v, ell = h.variance, h.length
        return KernelFunction(lambda x: v * np.exp(-x / ell), v, "cauchy", 2 * v * ell, None, ell)
    K = fs.covariance_from_density(h, half_width=200.0, spacing=0.01)
    return kernel_from_covariance(K, zero_tol=1e-8)


def as_kernel(K) -> KernelFunction:
    if isinstance(K, KernelFunction):
        return K
    if isinstance(K, fs.CovarianceKernel):
        return kernel_from_covariance(K)
    if isinstance(K, fs.SpectralDensity):
        return kernel_from_density(K)
    raise TypeError(f"cannot interpret {type(K).__name__} as a kernel")


def _bspline3(t: np.ndarray) -> np.ndarray:
    t = np.abs(t)
    return np.where(t < 1, 2 / 3 - t ** 2 + 0.5 * t ** 3, np.where(t < 2, (2 - t) ** 3 / 6, 0.0))


@lru_cache(maxsize=256)
def _weights_cached(K: KernelFunction, h: float, n: int, mode: str) -> np.ndarray:
    k = np.arange(n + 1, dtype=float)
    if mode == "point":
        return np.asarray(K(k * h), dtype=float)
    # w_k = int K(u) B(u/h - k) du / h with B the cubic B-spline; Riemann sum on a
    # sub-grid fine enough for both K and B, evaluated as one correlation
    M = max(16, int(math.ceil(16 * h / K.length)))
    if M * (n + 4) <= 4_000_000:
        j = np.arange(-2 * M, n * M + 2 * M + 1)
        Kf = np.asarray(K(j * (h / M)), dtype=float)
        b = _bspline3(np.arange(-2 * M, 2 * M + 1) / M)
        corr = signal.fftconvolve(Kf, b, mode="valid") if Kf.size > 4096 else np.convolve(Kf, b, mode="valid")
        return corr[::M][: n + 1] / M
    # grid far coarser than the kernel: K is smooth across the cells of lags >= 3,
    # and the first three lags are integrated adaptively around the origin
    t, wt = np.polynomial.legendre.leggauss(12)
    out = np.zeros(n + 1)
    for a in (-2.0, -1.0, 0.0, 1.0):
        tt = a + 0.5 * (t + 1.0)
        ww = 0.5 * wt * _bspline3(tt)
        out += (K((k[:, None] + tt[None, :]) * h) * ww[None, :]).sum(axis=1)
    for kk in range(min(3, n + 1)):
        f = lambda u, kk=kk: float(K(np.array(u))) * float(_bspline3(np.array(u / h - kk))) / h
        lo, hi = (kk - 2) * h, (kk + 2) * h
        pts = [p for p in (0.0, -K.length, K.length, (kk - 1) * h, kk * h, (kk + 1) * h) if lo < p < hi]
        out[kk] = integrate.quad(f, lo, hi, points=sorted(set(pts)), limit=400, epsabs=0, epsrel=1e-12)[0]
    return out


def lag_weights(K, h: float, n: int, mode: str = "point") -> np.ndarray:
    """``w_0 .. w_n`` for lags ``k h``."""
    if mode not in WEIGHT_MODES:
        raise ValueError(f"weight mode must be one of {WEIGHT_MODES}")
    if isinstance(K, LocalKernel):
        w = np.zeros(n + 1)
        w[0] = 1.0 / h
        return w
    return _weights_cached(as_kernel(K), float(h), int(n), mode)


class LocalKernel:
    """The Dirac kernel: ``Q(f) = ||f||_4^4``.  Used for the Gagliardo-Nirenberg problem."""

    k0 = math.inf
    name = "delta"


# ---------------------------------------------------------------------------
# profiles


@dataclass
class Profile:
    """Grid function on ``]-r, r[`` with zero ends and unit discrete norm."""

    r: float
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 3:
            raise ValueError("profile needs at least one interior node")
        if self.values[0] != 0.0 or self.values[-1] != 0.0:
            raise ValueError("profile must vanish at both ends")
        n2 = self.norm2()
        if abs(n2 - 1.0) > 1e-10:
            raise ValueError(f"profile is not unit-normalized (norm^2 = {n2})")

    @property
    def n_grid(self) -> int:
        return self.values.size - 1

    @property
    def spacing(self) -> float:
        return 2 * self.r / self.n_grid

    @property
    def interval(self) -> tuple[float, float]:
        return (-self.r, self.r)

    @property
    def x(self) -> np.ndarray:
        return -self.r + self.spacing * np.arange(self.n_grid + 1)

    @property
    def interior(self) -> np.ndarray:
        return self.values[1:-1]

    def norm2(self) -> float:
        return self.spacing * float(np.dot(self.values, self.values))

    def energy(self) -> float:
        return energy(self.interior, self.spacing)

    def derivative(self) -> np.ndarray:
        return np.diff(self.values) / self.spacing

    def l4_4(self) -> float:
        return self.spacing * float(np.sum(self.values ** 4))

    def width(self) -> float:
        g = self.values ** 2
        return math.sqrt(self.spacing * float(np.dot(self.x ** 2, g)))

    def reflect(self) -> "Profile":
        return Profile(self.r, self.values[::-1].copy())

    def dilate(self, lam: float) -> "Profile":
        """``sqrt(lam) f(lam x)`` on ``]-r/lam, r/lam[`` with the same node count."""
        return Profile(self.r / lam, math.sqrt(lam) * self.values)

    def pad(self, r_new: float) -> "Profile":
        """Zero extension to a larger box at the same spacing."""
        h = self.spacing
        extra = (r_new - self.r) / h
        k = int(round(extra))
        if k < 0 or abs(extra - k) > 1e-8:
            raise ValueError("padding must add a whole number of nodes on each side")
        return Profile(r_new, np.pad(self.values, k))

    @classmethod
    def from_interior(cls, r: float, interior: np.ndarray, meta: dict | None = None) -> "Profile":
        v = np.concatenate([[0.0], np.asarray(interior, dtype=float), [0.0]])
        h = 2 * r / (v.size - 1)
        nrm = math.sqrt(h * float(np.dot(v, v)))
        if nrm == 0:
            raise ValueError("cannot normalize the zero function")
        return cls(r, v / nrm, meta or {})

    @classmethod
    def from_function(cls, func: Callable, r: float, n_grid: int) -> "Profile":
        h = 2 * r / n_grid
        x = -r + h * np.arange(1, n_grid)
        return cls.from_interior(r, func(x))

    @classmethod
    def ground(cls, r: float, n_grid: int) -> "Profile":
        """Discrete Dirichlet ground state ``cos(pi x / 2r)``."""
        return cls.from_function(lambda x: np.cos(0.5 * math.pi * x / r), r, n_grid)


def energy(f: np.ndarray, h: float) -> float:
    """``1/2 ||f'||^2`` for interior values ``f`` (zero ends implied)."""
    d = np.diff(np.concatenate([[0.0], f, [0.0]]))
    return 0.5 * float(np.dot(d, d)) / h


def neg_laplacian(f: np.ndarray, h: float) -> np.ndarray:
    """``-Delta_h f`` on the interior."""
    p = np.concatenate([[0.0], f, [0.0]])
    return (2 * p[1:-1] - p[:-2] - p[2:]) / h ** 2


def dirichlet_floor(r: float, n_grid: int) -> float:
    """Smallest eigenvalue of the discrete ``-1/2 Delta`` on ``I_r``."""
    h = 2 * r / n_grid
    return (1.0 - math.cos(math.pi / n_grid)) / h ** 2


# ---------------------------------------------------------------------------
# the form (K * g, g)


class FormOperator:
    """Discrete convolution ``c = h * (w * g)`` on the interior nodes of one grid."""

    def __init__(self, K, h: float, m: int, mode: str = "point"):
        self.h = float(h)
        self.m = int(m)
        self.mode = mode
        self.kernel = K
        self.w = lag_weights(K, h, max(m, 1), mode)
        self._full = np.concatenate([self.w[m - 1:0:-1], self.w[:m]]) if m > 1 else self.w[:1]

    def conv(self, g: np.ndarray) -> np.ndarray:
        if self.m <= 256:
            return self.h * np.convolve(self._full, g, mode="valid")
        return self.h * signal.fftconvolve(self._full, g, mode="valid")

    def form(self, g1: np.ndarray, g2: np.ndarray | None = None) -> float:
        g2 = g1 if g2 is None else g2
        return self.h * float(np.dot(self.conv(g1), g2))


def quadratic_form(K, f: Profile, mode: str = "point") -> float:
    """``(K * f^2, f^2)`` by discrete convolution."""
    if not isinstance(K, LocalKernel):
        Kf = as_kernel(K)
        # sampled kernels must cover every lag in the box
        if isinstance(K, fs.CovarianceKernel) and K.half_width < 2 * f.r * (1 - 1e-12) \
                and K.support_bound is None and abs(K.values[0]) > 1e-14 * abs(K.k0):
            raise ValueError("kernel window must cover lags up to 2r")
        K = Kf
    g = f.interior ** 2
    op = FormOperator(K, f.spacing, g.size, mode)
    return op.form(g)


def quadratic_form_direct(K, f: Profile) -> float:
    """O(n^2) double sum, used as an oracle."""
    K = as_kernel(K)
    x = f.x
    g = f.values ** 2
    M = K(x[:, None] - x[None, :])
    return f.spacing ** 2 * float(g @ M @ g)


# ---------------------------------------------------------------------------
# sine-basis preconditioning


def laplacian_spectrum(m: int, h: float) -> np.ndarray:
    """Eigenvalues of the discrete ``-1/2 Delta`` with ``m`` interior nodes."""
    k = np.arange(1, m + 1)
    return (1.0 - np.cos(math.pi * k / (m + 1))) / h ** 2


def dst(z: np.ndarray) -> np.ndarray:
    """Orthonormal DST-I, its own inverse."""
    return sfft.dst(z, type=1, norm="ortho")


def ground_state(V: np.ndarray, h: float) -> tuple[float, np.ndarray]:
    """Ground state of ``-1/2 Delta - V``; eigenvector unit in the discrete norm."""
    return sch.ground_state(V, h)
