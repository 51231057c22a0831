"""Principal Dirichlet eigenvalues of ``-1/2 d^2/dx^2 - V`` on intervals.

Discretization is the standard three-point stencil on a uniform grid with
``n_grid`` sub-intervals; the unknowns live on the ``n_grid - 1`` interior
nodes and the eigenfunction vanishes at both ends.  The smallest eigenvalue
is found by Sturm-sequence bisection followed by inverse iteration (LAPACK
``stebz``/``stein``), and a vectorized Sturm count is exposed for batched
threshold questions such as ``lambda(V) <= x`` over many random potentials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from . import field_synth as fs
from . import rng as _rng


@dataclass
class Potential:
    """``V`` at the interior nodes of a uniform grid on ``interval``."""

    interval: tuple[float, float]
    spacing: float
    values: np.ndarray

    def __post_init__(self):
        a, b = self.interval
        if not a < b:
            raise ValueError("interval must satisfy a < b")
        self.values = np.asarray(self.values, dtype=float)
        n = (b - a) / self.spacing
        if abs(n - round(n)) > 1e-8 * max(1.0, n):
            raise ValueError("spacing must divide the interval length")
        if self.values.shape != (int(round(n)) - 1,):
            raise ValueError(f"expected {int(round(n)) - 1} interior values, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("potential must be finite")

    @property
    def n_grid(self) -> int:
        return self.values.size + 1

    @property
    def x(self) -> np.ndarray:
        a, _ = self.interval
        return a + self.spacing * np.arange(1, self.n_grid)

    def at(self, x) -> np.ndarray:
        return np.interp(x, self.x, self.values)

    @classmethod
    def from_function(cls, func: Callable, interval: tuple[float, float], n_grid: int) -> "Potential":
        a, b = interval
        h = (b - a) / n_grid
        x = a + h * np.arange(1, n_grid)
        return cls((a, b), h, np.broadcast_to(np.asarray(func(x), dtype=float), x.shape).copy())

    @classmethod
    def constant(cls, c: float, interval: tuple[float, float], n_grid: int) -> "Potential":
        return cls.from_function(lambda x: np.full_like(x, c), interval, n_grid)

    @classmethod
    def from_field(cls, sample: fs.FieldSample, interval: tuple[float, float], n_grid: int,
                   scale: float = 1.0) -> "Potential":
        """``scale * v`` on the eigen grid by linear interpolation of the sample."""
        return cls.from_function(lambda x: scale * sample(x), interval, n_grid)

    def __add__(self, c: float) -> "Potential":
        return Potential(self.interval, self.spacing, self.values + c)


@dataclass
class EigenResult:
    lam: float
    eigenfunction: np.ndarray  # includes the two zero end values
    x: np.ndarray
    residual: float
    n_grid: int

    @property
    def spacing(self) -> float:
        return float(self.x[1] - self.x[0])


def operator_bands(values: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal and off-diagonal of the discrete ``-1/2 Delta - V``."""
    d = 1.0 / h ** 2 - np.asarray(values, dtype=float)
    e = np.full(d.shape[-1] - 1, -0.5 / h ** 2)
    return d, e


def dense_operator(values: np.ndarray, h: float) -> np.ndarray:
    d, e = operator_bands(values, h)
    return np.diag(d) + np.diag(e, 1) + np.diag(e, -1)


def _resample(V: Potential, n_grid: int | None) -> Potential:
    if n_grid is None or n_grid == V.n_grid:
        return V
    return Potential.from_function(V.at, V.interval, n_grid)


def ground_state(values: np.ndarray, h: float) -> tuple[float, np.ndarray]:
    """Smallest eigenpair of the interior matrix; vector unit in ``h * sum f^2``, max positive."""
    d, e = operator_bands(values, h)
    if d.size == 1:
        return float(d[0]), np.array([1.0 / math.sqrt(h)])
    w, vec = linalg.eigh_tridiagonal(d, e, select="i", select_range=(0, 0), lapack_driver="stebz")
    f = vec[:, 0]
    if f[np.argmax(np.abs(f))] < 0:
        f = -f
    f = f / math.sqrt(h * np.dot(f, f))
    return float(w[0]), f


def principal_eigenvalue(V: Potential, n_grid: int | None = None) -> EigenResult:
    """Ground state of ``-1/2 d^2/dx^2 - V`` with Dirichlet ends.

    ``n_grid`` (number of sub-intervals) resamples ``V`` by linear
    interpolation; ``None`` keeps the potential's own grid.
    """
    if n_grid is not None and n_grid < 16:
        raise ValueError("n_grid must be at least 16")
    V = _resample(V, n_grid)
    h = V.spacing
    lam, f = ground_state(V.values, h)
    d, e = operator_bands(V.values, h)
    r = d * f - lam * f
    r[:-1] += e * f[1:]
    r[1:] += e * f[:-1]
    a, b = V.interval
    full = np.concatenate([[0.0], f, [0.0]])
    x = a + h * np.arange(V.n_grid + 1)
    return EigenResult(lam, full, x, math.sqrt(h * np.dot(r, r)), V.n_grid)


def rayleigh_quotient(f_full: np.ndarray, V: Potential) -> float:
    """``1/2 ||f'||^2 - (V, f^2)`` with forward differences and spacing-weighted sums."""
    h = V.spacing
    df = np.diff(f_full) / h
    return 0.5 * h * np.dot(df, df) - h * np.dot(V.values, f_full[1:-1] ** 2)


def sturm_count(diag: np.ndarray, off: np.ndarray, x: float) -> np.ndarray:
    """Number of eigenvalues below ``x`` for each row of ``diag`` (shared off-diagonal).

    Counts negative pivots of the LDL^T factorization of ``T - x I``,
    vectorized across rows.
    """
    diag = np.atleast_2d(diag)
    off2 = np.asarray(off, dtype=float) ** 2
    tiny = np.finfo(float).tiny ** 0.5
    q = diag[:, 0] - x
    count = (q < 0).astype(np.int64)
    for i in range(1, diag.shape[1]):
        q = np.where(q == 0.0, tiny, q)
        q = (diag[:, i] - x) - off2[i - 1] / q
        count += q < 0
    return count


def bisect_lowest(diag: np.ndarray, off: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Smallest eigenvalue per row by bisection on the Sturm count (batched)."""
    diag = np.atleast_2d(diag)
    rad = 2 * np.max(np.abs(off)) if np.size(off) else 0.0
    lo = diag.min(axis=1) - rad
    hi = diag.min(axis=1) + rad
    while np.max(hi - lo) > tol * max(1.0, float(np.max(np.abs(hi)))):
        mid = 0.5 * (lo + hi)
        below = np.array([sturm_count(diag[i:i + 1], off, mid[i])[0] for i in range(diag.shape[0])])
        hi = np.where(below >= 1, mid, hi)
        lo = np.where(below >= 1, lo, mid)
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# sub-box minima


@dataclass
class BoxEigen:
    z: float
    lam: float
    clipped: bool


@dataclass
class SubboxResult:
    min_lambda: float
    argmin_z: float
    per_box: list[BoxEigen]

    def rows(self):
        return [(b.z, b.lam, int(b.clipped)) for b in self.per_box]


def box_centres(R: float, r: float) -> np.ndarray:
    """``(2r Z) intersected with ]-(R+r), R+r[``."""
    kmax = int(math.floor((R + r) / (2 * r)))
    z = 2 * r * np.arange(-kmax, kmax + 1)
    return z[np.abs(z) < R + r]


def min_subbox_eigenvalue(V: Potential, r: float, include_clipped: bool = False) -> SubboxResult:
    """Minimum of ``lambda(V, z + I_{2r+1})`` over ``z`` in ``2r Z`` within ``I_{R+r}``.

    ``V`` must live on a symmetric interval ``I_R = ]-R, R[``.  Boxes sticking
    out of ``I_R`` are clipped to it and, unless ``include_clipped``, left out
    of the minimum.
    """
    a, b = V.interval
    if not math.isclose(a, -b, rel_tol=1e-12, abs_tol=1e-12):
        raise ValueError("potential must be given on a symmetric interval ]-R, R[")
    R = b
    if r < 2:
        raise ValueError("box parameter r must be at least 2")
    if R <= r:
        raise ValueError("R must exceed r: no admissible boxes")
    h = V.spacing
    xs = V.x
    half = 2 * r + 1
    boxes = []
    for z in box_centres(R, r):
        lo, hi = z - half, z + half
        clipped = lo < -R - 1e-12 or hi > R + 1e-12
        lo, hi = max(lo, -R), min(hi, R)
        # nodes strictly inside the box; aligned boxes give principal submatrices
        inside = (xs > lo + 1e-9 * h) & (xs < hi - 1e-9 * h)
        aligned = (abs((lo - a) / h - round((lo - a) / h)) < 1e-8
                   and abs((hi - a) / h - round((hi - a) / h)) < 1e-8)
        if aligned:
            vals = V.values[inside]
        else:
            n = max(2, int(round((hi - lo) / h)))
            vals = V.at(lo + (hi - lo) / n * np.arange(1, n))
            h_box = (hi - lo) / n
        lam = ground_state(vals, h if aligned else h_box)[0]
        boxes.append(BoxEigen(float(z), lam, clipped))
    usable = [bx for bx in boxes if include_clipped or not bx.clipped]
    if not usable:
        raise ValueError("every box is clipped; enlarge R or pass include_clipped=True")
    best = min(usable, key=lambda bx: bx.lam)
    return SubboxResult(best.lam, best.z, boxes)


# ---------------------------------------------------------------------------
# Monte Carlo eigenvalue tails


def wilson_interval(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n <= 0:
        return 0.0, 1.0
    p = k / n
    den = 1 + z * z / n
    c = (p + z * z / (2 * n)) / den
    w = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, c - w), min(1.0, c + w)


@dataclass
class TailRow:
    T: float
    n_hit: int
    n_total: int
    p_hat: float
    lo: float
    hi: float
    log_prob_over_logT: float
    bound: bool  # True when p_hat is a one-sided upper bound (no hits)


@dataclass
class TailMCResult:
    rows: list[TailRow]
    exponent: float
    exponent_is_bound: bool
    alpha: float
    r: float
    x: float
    n_grid: int
    fit_points: int = 0
    extra: dict = field(default_factory=dict)

    def table(self):
        return [(t.T, t.n_hit, t.n_total, t.p_hat, t.lo, t.hi) for t in self.rows]


def eigenvalue_tail_mc(h: fs.SpectralDensity, alpha: float, r: float, T_list: Sequence[float],
                       x: float, n_fields: int, seed: int, n_grid: int = 40,
                       workers: int = 1) -> TailMCResult:
    """Empirical ``nu[lambda(alpha v / sqrt(log T), I_r) <= x]`` for each ``T``.

    Field draws are shared across ``T``.  The exponent is the least-squares
    slope of ``log p_hat`` against ``log T`` over the ``T`` with hits; with
    fewer than two such ``T`` the most favourable ratio
    ``log(p_upper)/log T`` is reported as a one-sided bound.
    """
    if alpha == 0:
        raise ValueError("alpha must be non-zero")
    if min(T_list) < 3:
        raise ValueError("every T must be at least 3")
    if n_fields < 100:
        raise ValueError("n_fields must be at least 100")
    hgrid = 2 * r / n_grid
    grid = fs.Grid(-r + hgrid, hgrid, n_grid - 1)
    plan = fs.synthesis_plan(h, grid)
    scales = np.array([alpha / math.sqrt(math.log(T)) for T in T_list])
    off = np.full(n_grid - 2, -0.5 / hgrid ** 2)
    blocks = list(range((n_fields + fs.FIELD_BLOCK - 1) // fs.FIELD_BLOCK))

    def work(b: int) -> np.ndarray:
        v = fs.field_block(h, grid, seed, b, plan, stream="eigenvalue_tail_mc")
        v = v[: min(fs.FIELD_BLOCK, n_fields - b * fs.FIELD_BLOCK)]
        hits = np.empty(scales.size, dtype=np.int64)
        for j, s in enumerate(scales):
            diag = 1.0 / hgrid ** 2 - s * v
            hits[j] = int(np.count_nonzero(sturm_count(diag, off, x) >= 1))
        return hits

    hits = np.sum(_rng.parallel_map(work, blocks, workers), axis=0)
    rows = []
    for T, k in zip(T_list, hits):
        lo, hi = wilson_interval(int(k), n_fields)
        if k > 0:
            p = k / n_fields
            rows.append(TailRow(float(T), int(k), n_fields, p, lo, hi, math.log(p) / math.log(T), False))
        else:
            rows.append(TailRow(float(T), 0, n_fields, 1.0 / n_fields, lo, hi,
                                math.log(hi) / math.log(T), True))
    good = [t for t in rows if not t.bound]
    if len(good) >= 2:
        lt = np.log([t.T for t in good])
        lp = np.log([t.p_hat for t in good])
        slope = float(np.polyfit(lt, lp, 1)[0])
        return TailMCResult(rows, slope, False, alpha, r, x, n_grid, len(good))
    bound = max(t.log_prob_over_logT for t in rows)
    return TailMCResult(rows, bound, True, alpha, r, x, n_grid, len(good))
