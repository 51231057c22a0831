"""Brownian and shear-flow path simulation.

Paths are simulated in blocks of ``PATH_BLOCK``; each block owns one random
stream addressed by ``(seed, operation, block)``, and increments are drawn in
fixed time chunks, so any path is reproducible on its own and results do not
depend on the number of workers.

Box exits between grid times are accounted for with the Brownian-bridge
crossing probability ``exp(-2 (a - x)(a - y) / dt)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import special

from . import field_synth as fs
from . import rng as _rng
from .schrodinger import wilson_interval

PATH_BLOCK = 256
TIME_CHUNK = 2048
COVERAGE_WARN = 0.01


@dataclass
class PathConfig:
    T: float
    dt: float
    R: float = 1.0
    seed: int = 0
    n_paths: int = 1000
    travel: float | None = None  # travel window of the confinement strategy; T/log T if None

    def __post_init__(self):
        if not self.T > math.e:
            raise ValueError("T must exceed e so that log T > 1")
        if not self.dt > 0 or self.dt > self.T / 100 * (1 + 1e-12):
            raise ValueError("dt must satisfy 0 < dt <= T/100")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-6 * steps:
            raise ValueError("T/dt must be an integer")
        if self.R <= 0 or self.n_paths < 1:
            raise ValueError("R and n_paths must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def scale(self) -> float:
        return self.T * math.sqrt(math.log(self.T))

    @property
    def travel_time(self) -> float:
        return self.T / math.log(self.T) if self.travel is None else self.travel


def increment_chunks(seed: int, stream: str, block: int, n_paths: int, n_steps: int, dt: float):
    """Yield ``(start_step, increments)`` chunks of shape ``(n_paths, <= TIME_CHUNK)``."""
    gen = _rng.generator(seed, stream, block)
    sd = math.sqrt(dt)
    for s in range(0, n_steps, TIME_CHUNK):
        m = min(TIME_CHUNK, n_steps - s)
        yield s, sd * gen.standard_normal((PATH_BLOCK, m))[:n_paths]


def brownian_increments(seed: int, n: int, dt: float, stream: str = "increments") -> np.ndarray:
    """``n`` increments of one path (used for distribution checks)."""
    return np.concatenate([c for _, c in increment_chunks(seed, stream, 0, 1, n, dt)], axis=1)[0]


def _interp(field: fs.FieldSample, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Linear interpolation of the field; positions beyond the grid are clamped and flagged."""
    u = (x - field.origin) / field.grid_spacing
    last = field.count - 1
    off = (u < 0) | (u > last)
    u = np.clip(u, 0.0, last)
    i = np.minimum(u.astype(np.int64), last - 1)
    w = u - i
    v = field.values
    return v[i] * (1 - w) + v[i + 1] * w, off


# ---------------------------------------------------------------------------
# Y_T


@dataclass
class YSamples:
    values: np.ndarray
    off_grid: np.ndarray  # per-path flag
    T: float
    coverage_warning: bool

    @property
    def off_fraction(self) -> float:
        return float(self.off_grid.mean()) if self.off_grid.size else 0.0


def _y_block(field: fs.FieldSample, cfg: PathConfig, block: int, n: int, stream: str):
    N = cfg.n_steps
    pos = np.zeros(n)
    acc = np.zeros(n)
    off = np.zeros(n, dtype=bool)
    for _, inc in increment_chunks(cfg.seed, stream, block, n, N, cfg.dt):
        # left Riemann sum: v at B_{t_k}, k = 0 .. N-1
        path = pos[:, None] + np.concatenate([np.zeros((n, 1)), np.cumsum(inc[:, :-1], axis=1)], axis=1)
        vals, o = _interp(field, path)
        acc += vals.sum(axis=1)
        off |= o.any(axis=1)
        pos = path[:, -1] + inc[:, -1]
    return acc / N, off, pos


def simulate_y_samples(field: fs.FieldSample, cfg: PathConfig, workers: int = 1,
                       stream: str = "simulate_y_samples") -> YSamples:
    """``Y_T = (1/(T sqrt(log T))) int_0^T v(B_s) ds`` by the left Riemann sum."""
    blocks = _rng.block_ranges(cfg.n_paths, PATH_BLOCK)
    parts = _rng.parallel_map(lambda b: _y_block(field, cfg, b[0], b[2] - b[1], stream), blocks, workers)
    mean_v = np.concatenate([p[0] for p in parts])
    off = np.concatenate([p[1] for p in parts])
    y = mean_v / math.sqrt(math.log(cfg.T))
    return YSamples(y, off, cfg.T, bool(off.mean() > COVERAGE_WARN))


# ---------------------------------------------------------------------------
# single shear-flow trajectory


@dataclass
class Trajectory:
    t: np.ndarray
    X1: np.ndarray
    X2: np.ndarray
    W2: np.ndarray
    drift: np.ndarray  # int_0^t v(X1_s) ds
    off_grid: bool


def shear_trajectory(field: fs.FieldSample, T: float, dt: float, seed: int, substeps: int = 1,
                     stream: str = "shear_trajectory") -> Trajectory:
    """``X1 = W1``, ``X2 = W2 + int v(W1_s) ds``, Euler in the drift.

    Brownian increments are drawn on the finer grid ``dt / substeps`` and
    summed, so runs with ``(dt, 2)`` and ``(dt/2, 1)`` share the same noise.
    """
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * T:
        raise ValueError("T/dt must be an integer")
    nf = n * substeps
    inc = np.concatenate([c for _, c in increment_chunks(seed, stream, 0, 2, nf, dt / substeps)], axis=1)
    inc = inc.reshape(2, n, substeps).sum(axis=2)
    W1 = np.concatenate([[0.0], np.cumsum(inc[0])])
    W2 = np.concatenate([[0.0], np.cumsum(inc[1])])
    vals, off = _interp(field, W1[:-1])
    drift = np.concatenate([[0.0], np.cumsum(vals * dt)])
    t = dt * np.arange(n + 1)
    return Trajectory(t, W1, W2 + drift, W2, drift, bool(off.any()))


# ---------------------------------------------------------------------------
# rate curves


@dataclass
class RateCell:
    y: float
    T: float
    hits: int
    n: int
    p_hat: float
    rate: float
    lo: float
    hi: float
    bound: bool


@dataclass
class RateCurveEstimate:
    y_grid: np.ndarray
    T_list: list
    epsilon: float
    cells: list
    off_fraction: dict = field(default_factory=dict)

    def cell(self, y: float, T: float) -> RateCell:
        for c in self.cells:
            if math.isclose(c.y, y, abs_tol=1e-12) and math.isclose(c.T, T):
                return c
        raise KeyError((y, T))

    def rows(self):
        return [(c.y, c.T, c.hits, c.n, c.p_hat, c.rate, c.lo, c.hi) for c in self.cells]


def rate_cell(y: float, T: float, hits: int, n: int) -> RateCell:
    lo_p, hi_p = wilson_interval(hits, n)
    if hits == 0:
        r = math.log(1.0 / n) / T
        return RateCell(y, T, 0, n, 0.0, r, -math.inf, math.log(hi_p) / T, True)
    p = hits / n
    return RateCell(y, T, hits, n, p, math.log(p) / T, math.log(lo_p) / T, math.log(hi_p) / T, False)


def field_for_paths(h: fs.SpectralDensity, T_max: float, seed: int, spacing: float = 0.25,
                    index: int = 0) -> fs.FieldSample:
    """One quenched field on ``[-8 sqrt(T), 8 sqrt(T)]``."""
    half = 8 * math.sqrt(T_max) + 2
    grid = fs.Grid.symmetric(half, spacing)
    return fs.sample_field(h, grid, seed, 1, start=index)[0]


def estimate_rate_curve(h: fs.SpectralDensity, y_grid: Sequence[float], epsilon: float,
                        T_list: Sequence[float], n_paths: int, seed: int, steps: int = 1000,
                        field: fs.FieldSample | None = None, workers: int = 1) -> RateCurveEstimate:
    """Empirical ``(1/T) log P0[|Y_T - y| <= eps]`` in one quenched field.

    ``steps`` sets ``dt = T / steps``.  Cells without hits carry the bound
    ``log(1/n)/T``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    ys = np.asarray(y_grid, dtype=float)
    field = field or field_for_paths(h, max(T_list), seed)
    cells, offs = [], {}
    for T in T_list:
        cfg = PathConfig(T, T / steps, 1.0, seed, n_paths)
        samp = simulate_y_samples(field, cfg, workers, stream=f"rate_curve/{T:g}")
        offs[float(T)] = samp.off_fraction
        for y in ys:
            hits = int(np.count_nonzero(np.abs(samp.values - y) <= epsilon))
            cells.append(rate_cell(float(y), float(T), hits, n_paths))
    return RateCurveEstimate(ys, [float(t) for t in T_list], epsilon, cells, offs)


# ---------------------------------------------------------------------------
# exit times


def exit_probability(a: float, T: float) -> float:
    """``P(sup_{[0,T]} |B| >= a)`` by the image series."""
    z = a / math.sqrt(T)
    if z < 0.5:
        # small barrier: the eigenfunction series converges fast
        s = sum((-1) ** k / (2 * k + 1) * math.exp(-((2 * k + 1) ** 2) * math.pi ** 2 / (8 * z * z))
                for k in range(200))
        return 1.0 - 4.0 / math.pi * s
    return 4.0 * sum((-1) ** k * float(special.ndtr(-(2 * k + 1) * z)) for k in range(50))


def log_exit_probability(a: float, T: float) -> float:
    z = a / math.sqrt(T)
    if z < 3:
        return math.log(exit_probability(a, T))
    # 4 Phibar(z) (1 - Phibar(3z)/Phibar(z) + ...) in logs
    lead = math.log(4.0) + float(special.log_ndtr(-z))
    corr = sum((-1) ** k * math.exp(float(special.log_ndtr(-(2 * k + 1) * z)) - float(special.log_ndtr(-z)))
               for k in range(1, 20))
    return lead + math.log1p(corr)


def _crossing(a: float, x0: np.ndarray, x1: np.ndarray, dt: float) -> np.ndarray:
    """Probability that a Brownian bridge from x0 to x1 over dt leaves ``]-a, a[``."""
    up = np.where((x0 < a) & (x1 < a), np.exp(-2 * np.maximum(a - x0, 0) * np.maximum(a - x1, 0) / dt), 1.0)
    dn = np.where((x0 > -a) & (x1 > -a), np.exp(-2 * np.maximum(a + x0, 0) * np.maximum(a + x1, 0) / dt), 1.0)
    return np.minimum(up + dn, 1.0)


@dataclass
class ExitRate:
    R: float
    T: float
    rate_mc: float
    rate_analytic: float
    p_mc: float
    se: float
    n: int
    bound: bool


def _exit_block(a_list: np.ndarray, T: float, steps: int, seed: int, block: int, n: int, stream: str):
    dt = T / steps
    pos = np.zeros(n)
    alive = np.ones((a_list.size, n))
    for _, inc in increment_chunks(seed, stream, block, n, steps, dt):
        path = pos[:, None] + np.cumsum(inc, axis=1)
        prev = np.concatenate([pos[:, None], path[:, :-1]], axis=1)
        for j, a in enumerate(a_list):
            alive[j] *= np.prod(1.0 - _crossing(a, prev, path, dt), axis=1)
        pos = path[:, -1]
    return 1.0 - alive  # conditional exit probability per path


def exit_time_rate(R_list: Sequence[float], T: float, n_paths: int, seed: int, steps: int = 10,
                   workers: int = 1) -> list[ExitRate]:
    """``(1/T) log P(sup_{[0,T]} |B| >= R T)`` by bridge-corrected MC, next to the exact series.

    The per-path exit probability given the grid values (a product of bridge
    non-crossing factors) is averaged, which is unbiased for the event.
    """
    R_arr = np.asarray(R_list, dtype=float)
    a_list = R_arr * T
    stream = "exit_time_rate"
    blocks = _rng.block_ranges(n_paths, PATH_BLOCK)
    parts = _rng.parallel_map(lambda b: _exit_block(a_list, T, steps, seed, b[0], b[2] - b[1], stream),
                              blocks, workers)
    probs = np.concatenate(parts, axis=1)
    out = []
    for j, R in enumerate(R_arr):
        p = float(probs[j].mean())
        se = float(probs[j].std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else math.nan
        analytic = log_exit_probability(R * T, T) / T
        if p > 0:
            out.append(ExitRate(float(R), T, math.log(p) / T, analytic, p, se, n_paths, False))
        else:
            out.append(ExitRate(float(R), T, math.log(1.0 / n_paths) / T, analytic, 0.0, se, n_paths, True))
    return out


# ---------------------------------------------------------------------------
# occupation measures


@dataclass
class OccupationMeasure:
    edges: np.ndarray
    mass: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def mass_in(self, lo: float, hi: float) -> float:
        c = self.centers
        return float(self.mass[(c >= lo) & (c <= hi)].sum())


def occupation_measure(path: np.ndarray, S: float, T: float, bins, dt: float = 1.0) -> OccupationMeasure:
    """Normalized time spent per bin over ``[S, T)`` for a path sampled every ``dt``."""
    path = np.asarray(path, dtype=float)
    if not 0 <= S < T:
        raise ValueError("need 0 <= S < T")
    i0, i1 = int(round(S / dt)), int(round(T / dt))
    if i1 > path.size - 1 + 1e-9 or i0 >= i1:
        raise ValueError("empty or out-of-horizon window")
    seg = path[i0:i1]
    if seg.size == 0:
        raise ValueError("empty window")
    if np.isscalar(bins) or isinstance(bins, int):
        lo, hi = float(seg.min()), float(seg.max())
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        edges = np.linspace(lo, hi, int(bins) + 1)
    else:
        edges = np.asarray(bins, dtype=float)
    counts, _ = np.histogram(seg, bins=edges)
    return OccupationMeasure(edges, counts / seg.size)


# ---------------------------------------------------------------------------
# confinement strategy


@dataclass
class StrategyResult:
    confinement_log_rate: float
    decay_rate: float  # slope of log survival over the second half of [travel, T]
    p_travel: float
    p_stay: float
    n_success: float
    n_paths: int
    window_mean: float  # mean of v seen by survivors over [travel, T]
    window_std: float
    occupation: OccupationMeasure | None
    inside_mass: float
    bound: bool


def _strategy_block(field, z, r, T, dt, travel, seed, block, n, stream, edges):
    steps = int(round(T / dt))
    k_travel = int(round(travel / dt))
    lo, hi = z - r, z + r
    pos = np.zeros(n)
    big = steps + 1
    enter_step = np.where((pos > lo) & (pos < hi), 0, big)
    weight = np.ones(n)
    surv_t = np.zeros(steps + 1)
    surv_t[0] = float(np.sum(enter_step == 0))
    vsum = np.zeros(n)
    vcount = 0
    hist = np.zeros(edges.size - 1)
    for s0, inc in increment_chunks(seed, stream, block, n, steps, dt):
        m = inc.shape[1]
        ks = s0 + 1 + np.arange(m)
        path = pos[:, None] + np.cumsum(inc, axis=1)
        prev = np.concatenate([pos[:, None], path[:, :-1]], axis=1)
        inside = (path > lo) & (path < hi)
        # first entry within the travel window
        cand = inside & (ks[None, :] <= k_travel) & (enter_step[:, None] == big)
        first = np.where(cand.any(axis=1), ks[np.argmax(cand, axis=1)], big)
        enter_step = np.minimum(enter_step, first)
        # after entry: stay inside, with the bridge correction per step
        stay = ks[None, :] > enter_step[:, None]
        keep = (1.0 - _crossing(r, prev - z, path - z, dt)) * inside
        factor = np.where(stay, keep, 1.0)
        running = weight[:, None] * np.cumprod(factor, axis=1)
        running = np.where(ks[None, :] >= k_travel, np.where(enter_step[:, None] < big, running, 0.0), running)
        active = enter_step[:, None] <= ks[None, :]
        surv_t[s0 + 1:s0 + 1 + m] = np.sum(np.where(active, running, 0.0), axis=0)
        late = ks > k_travel
        if late.any():
            pl = path[:, late]
            if field is not None:
                vsum += _interp(field, pl)[0].sum(axis=1)
            vcount += int(late.sum())
            hist += np.histogram(pl.ravel(), bins=edges, weights=running[:, late].ravel())[0]
        weight = running[:, -1]
        pos = path[:, -1]
    final = np.where(enter_step < big, weight, 0.0)
    travelled = float(np.sum(enter_step < big))
    return final, travelled, surv_t, vsum, vcount, hist


def strategy_lower_bound(field: fs.FieldSample | None, profile_box: tuple[float, float], T: float, dt: float,
                         n_paths: int, seed: int, travel: float | None = None,
                         workers: int = 1) -> StrategyResult:
    """Reach ``z + I_r`` within the travel window, then stay there until ``T``.

    Survival after entry is weighted by the bridge non-crossing probability
    per step.  ``field=None`` is the zero field.
    """
    z, r = map(float, profile_box)
    if r < 1:
        raise ValueError("r must be at least 1")
    travel = T / math.log(T) if travel is None else travel
    if abs(z) > travel:
        raise ValueError("|z| must not exceed the travel window")
    edges = np.linspace(z - 2 * r, z + 2 * r, 81)
    stream = "strategy_lower_bound"
    blocks = _rng.block_ranges(n_paths, PATH_BLOCK)
    parts = _rng.parallel_map(lambda b: _strategy_block(field, z, r, T, dt, travel, seed, b[0], b[2] - b[1],
                                                        stream, edges), blocks, workers)
    final = np.concatenate([p[0] for p in parts])
    travelled = sum(p[1] for p in parts)
    surv = np.sum([p[2] for p in parts], axis=0)
    vsum = np.concatenate([p[3] for p in parts])
    vcount = parts[0][4]
    hist = np.sum([p[5] for p in parts], axis=0)
    success = float(final.sum())
    p_travel = travelled / n_paths
    p_stay = success / travelled if travelled > 0 else 0.0
    steps = int(round(T / dt))
    k0 = int(round(travel / dt))
    k_mid = (k0 + steps) // 2
    if surv[steps] > 0 and surv[k_mid] > 0:
        decay = -(math.log(surv[steps]) - math.log(surv[k_mid])) / ((steps - k_mid) * dt)
    else:
        decay = math.nan
    if success > 0:
        rate = math.log(success / n_paths) / T
        bound = False
    else:
        rate = math.log(1.0 / n_paths) / T
        bound = True
    wm = float(np.sum(final * vsum / max(vcount, 1)) / success) if success > 0 else math.nan
    wv = float(np.sum(final * (vsum / max(vcount, 1) - wm) ** 2) / success) if success > 0 else math.nan
    occ = OccupationMeasure(edges, hist / hist.sum()) if hist.sum() > 0 else None
    inside = occ.mass_in(z - r, z + r) if occ is not None else math.nan
    return StrategyResult(rate, decay, p_travel, p_stay, success, n_paths, wm, math.sqrt(max(wv, 0.0)) if success > 0 else math.nan,
                          occ, inside, bound)


# ---------------------------------------------------------------------------
# persistence


def write_rows(path: str | Path, columns: Sequence[str], rows, header: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
