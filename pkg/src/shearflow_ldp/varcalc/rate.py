"""Rate tables and Legendre transforms."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import rng as _rng
from . import lam as _lam


def default_alphas() -> np.ndarray:
    """Non-negative multipliers: geometric to 1, then linear, then coarse up to 60."""
    small = np.geomspace(1e-6, 1.0, 37)[:-1]
    mid = np.arange(1.0, 10.0, 0.25)
    big = np.arange(10.0, 60.0 + 1e-9, 2.5)
    return np.concatenate([[0.0], small, mid, big])


def conjugate(xs: np.ndarray, fs: np.ndarray, s: float) -> tuple[float, float, bool]:
    """``sup_x s x - F(x)`` over ``[xs[0], xs[-1]]`` with local parabolic refinement.

    Each consecutive knot triple defines a parabola; the supremum of
    ``s x - P(x)`` over the triple's span is taken in closed form.  The
    result is a maximum of suprema of affine functions of ``s``, hence
    exactly convex in ``s``.  Returns ``(value, argmax, at_boundary)``.
    """
    xs = np.asarray(xs, dtype=float)
    fs = np.asarray(fs, dtype=float)
    ok = np.isfinite(fs)
    xs, fs = xs[ok], fs[ok]
    g = s * xs - fs
    k = int(np.argmax(g))
    best, arg = float(g[k]), float(xs[k])
    if xs.size >= 3:
        x0, x1, x2 = xs[:-2], xs[1:-1], xs[2:]
        f0, f1, f2 = fs[:-2], fs[1:-1], fs[2:]
        d01 = (f1 - f0) / (x1 - x0)
        d12 = (f2 - f1) / (x2 - x1)
        a = (d12 - d01) / (x2 - x0)
        b = d01 - a * (x0 + x1)
        c = f0 - a * x0 * x0 - b * x0
        with np.errstate(divide="ignore", invalid="ignore"):
            xv = np.where(a > 0, (s - b) / (2 * a), x0)
        xv = np.clip(xv, x0, x2)
        gv = s * xv - (a * xv * xv + b * xv + c)
        j = int(np.argmax(gv))
        if gv[j] > best:
            best, arg = float(gv[j]), float(xv[j])
    at_boundary = arg >= xs[-1] * (1 - 1e-12) and xs[-1] > xs[0]
    return best, arg, bool(at_boundary)


@dataclass
class RateTable:
    """``Lambda`` on an r-ladder per multiplier, plus ``J`` on a y-grid."""

    alphas: np.ndarray  # sorted, symmetric about 0
    lambda_vals: np.ndarray  # (n_alpha, n_rungs)
    r_values: np.ndarray  # (n_alpha, n_rungs) box half-widths actually used
    limits: np.ndarray  # reported Lambda(alpha)
    converged: np.ndarray  # bool per alpha
    r_ladder: list = field(default_factory=list)  # rungs, in units of the profile width
    ys: np.ndarray = field(default_factory=lambda: np.zeros(0))
    j_vals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    diverged: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def check_even(self, rtol: float = 1e-12) -> None:
        a = np.asarray(self.alphas, dtype=float)
        L = np.asarray(self.limits, dtype=float)
        if a.size == 0 or not np.allclose(a, -a[::-1], rtol=0, atol=1e-12):
            raise ValueError("alpha grid is not symmetric about 0")
        if np.any(np.diff(a) <= 0):
            raise ValueError("alpha grid must be strictly increasing")
        if not np.all(np.abs(L - L[::-1]) <= rtol * np.maximum(1.0, np.abs(L))):
            raise ValueError("Lambda table is not even in alpha")

    def half(self) -> tuple[np.ndarray, np.ndarray]:
        m = self.alphas >= 0
        return self.alphas[m], self.limits[m]

    def with_j(self, ys: Sequence[float]) -> "RateTable":
        ys = np.asarray(ys, dtype=float)
        vals = [legendre_transform(self, y) for y in ys]
        self.ys = ys
        self.j_vals = np.array(vals)
        self.diverged = ~np.isfinite(self.j_vals)
        return self

    # -- persistence
    def write_csv(self, lambda_path: str | Path, j_path: str | Path, header: dict | None = None) -> None:
        head = [f"# {k}={v}" for k, v in (header or {}).items()]
        with open(lambda_path, "w", newline="") as fh:
            fh.writelines(line + "\n" for line in head)
            w = csv.writer(fh)
            w.writerow(["alpha", "r", "lambda", "converged"])
            for i, a in enumerate(self.alphas):
                for r, v in zip(self.r_values[i], self.lambda_vals[i]):
                    w.writerow([repr(float(a)), repr(float(r)), repr(float(v)), int(self.converged[i])])
                w.writerow([repr(float(a)), "inf", repr(float(self.limits[i])), int(self.converged[i])])
        with open(j_path, "w", newline="") as fh:
            fh.writelines(line + "\n" for line in head)
            w = csv.writer(fh)
            w.writerow(["y", "J", "diverged"])
            for y, jv, d in zip(self.ys, self.j_vals, self.diverged):
                w.writerow([repr(float(y)), repr(float(jv)), int(d)])

    @classmethod
    def read_csv(cls, lambda_path: str | Path, j_path: str | Path | None = None) -> "RateTable":
        rows: dict[float, dict] = {}
        with open(lambda_path) as fh:
            reader = csv.DictReader(line for line in fh if not line.startswith("#"))
            for row in reader:
                a = float(row["alpha"])
                d = rows.setdefault(a, {"r": [], "v": [], "lim": math.nan, "conv": False})
                if row["r"] == "inf":
                    d["lim"] = float(row["lambda"])
                    d["conv"] = bool(int(row["converged"]))
                else:
                    d["r"].append(float(row["r"]))
                    d["v"].append(float(row["lambda"]))
        alphas = np.array(sorted(rows))
        width = max(len(rows[a]["v"]) for a in alphas)
        pad = lambda seq: list(seq) + [math.nan] * (width - len(seq))
        table = cls(alphas,
                    np.array([pad(rows[a]["v"]) for a in alphas]),
                    np.array([pad(rows[a]["r"]) for a in alphas]),
                    np.array([rows[a]["lim"] for a in alphas]),
                    np.array([rows[a]["conv"] for a in alphas]))
        if j_path is not None and Path(j_path).exists():
            ys, js, dv = [], [], []
            with open(j_path) as fh:
                for row in csv.DictReader(line for line in fh if not line.startswith("#")):
                    ys.append(float(row["y"]))
                    js.append(float(row["J"]))
                    dv.append(bool(int(row["diverged"])))
            table.ys, table.j_vals, table.diverged = np.array(ys), np.array(js), np.array(dv, dtype=bool)
        return table


def build_rate_table(K, alphas: Sequence[float] | None = None, ys: Sequence[float] | None = None,
                     rungs=(4, 8, 16, 32), points_per_width: float = 16.0, mode: str = "cell",
                     rtol: float = 1e-3, workers: int = 1) -> RateTable:
    """Ladder every non-negative multiplier and mirror onto the negative side."""
    pos = np.unique(np.abs(np.asarray(default_alphas() if alphas is None else alphas, dtype=float)))

    def one(a: float) -> _lam.LadderResult:
        return _lam.lambda_limit(K, float(a), rungs=rungs, points_per_width=points_per_width,
                                 mode=mode, rtol=rtol)

    ladders = _rng.parallel_map(one, list(pos), workers)
    vals = np.array([ld.values for ld in ladders])
    rs = np.array([ld.r_values for ld in ladders])
    lim = np.array([ld.limit for ld in ladders])
    conv = np.array([ld.converged for ld in ladders])
    neg = pos[::-1][pos[::-1] > 0]
    order = np.concatenate([np.arange(len(pos) - 1, -1, -1)[pos[::-1] > 0], np.arange(len(pos))])
    alphas_full = np.concatenate([-neg, pos])
    table = RateTable(alphas_full, vals[order], rs[order], lim[order], conv[order], list(rungs))
    if ys is not None:
        table.with_j(ys)
    return table


def legendre_transform(table: RateTable, y: float) -> float:
    """``J(y) = sup_alpha alpha y - Lambda(alpha)``; ``inf`` when the sup sits on the grid edge."""
    table.check_even()
    a, L = table.half()
    val, _, edge = conjugate(a, L, abs(float(y)))
    return math.inf if edge else val


def legendre_argmax(table: RateTable, y: float) -> tuple[float, float, bool]:
    table.check_even()
    a, L = table.half()
    return conjugate(a, L, abs(float(y)))
