"""Figures rendered from the CSV artifacts of a run."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .varcalc.rate import RateTable  # noqa: E402

STYLE = {
    "font.family": "serif",
    "font.size": 9,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 3.5,
    "figure.figsize": (4.8, 3.2),
    "figure.dpi": 150,
    "savefig.bbox": "tight",
}


def read_table(path: Path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    if not rows:
        return {}
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


def _save(fig, path: Path) -> Path:
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_fields(d: Path) -> list[Path]:
    files = sorted(d.glob("field_*.csv"))
    out = []
    if files:
        fig, ax = plt.subplots()
        for p in files[:4]:
            t = read_table(p)
            ax.plot(t["x"], t["v"], lw=0.7)
        ax.set_xlabel("$x$")
        ax.set_ylabel("$v(x)$")
        out.append(_save(fig, d / "fields.png"))
    cov = d / "covariance.csv"
    if cov.exists():
        t = read_table(cov)
        fig, ax = plt.subplots()
        ax.errorbar(t["lag"], t["K_empirical"], yerr=3 * t["stderr"], fmt="o", label="empirical, 3 s.e.")
        if np.all(np.isfinite(t["K_exact"])):
            ax.plot(t["lag"], t["K_exact"], "k-", label="exact")
        ax.set_xlabel("lag")
        ax.set_ylabel("$K$")
        ax.legend()
        out.append(_save(fig, d / "covariance.png"))
    return out


def plot_rate(d: Path) -> list[Path]:
    lp = d / "lambda.csv"
    if not lp.exists():
        return []
    tbl = RateTable.read_csv(lp, d / "J.csv")
    a, L = tbl.half()
    out = []
    fig, ax = plt.subplots()
    ax.plot(a, L, "o-", label=r"$\Lambda(\alpha)$")
    ax.plot(a, math.sqrt(2) * a, "k--", lw=0.8, label=r"$\sqrt{2}\,\alpha$")
    ax.set_xscale("symlog", linthresh=1e-2)
    ax.set_xlabel(r"$\alpha$")
    ax.legend()
    out.append(_save(fig, d / "lambda.png"))
    if tbl.ys.size:
        fig, ax = plt.subplots()
        fin = np.isfinite(tbl.j_vals)
        ax.plot(tbl.ys[fin], tbl.j_vals[fin], "o-")
        for y in tbl.ys[~fin]:
            ax.axvline(y, color="0.8", lw=0.6)
        ax.set_xlabel("$y$")
        ax.set_ylabel(r"$\mathcal{J}(y)$")
        out.append(_save(fig, d / "J.png"))
    return out


def plot_mc(d: Path, rate_dir: Path | None = None) -> list[Path]:
    out = []
    rc = d / "rate_curve.csv"
    if rc.exists():
        t = read_table(rc)
        fig, ax = plt.subplots()
        for T in np.unique(t["T"]):
            m = (t["T"] == T) & (t["hits"] > 0)
            band = [t["hi"][m] - t["rate"][m], t["rate"][m] - t["lo"][m]]
            ax.errorbar(t["y"][m], -t["rate"][m], yerr=band, fmt="o", label=f"T = {T:g}")
        if rate_dir is not None and (rate_dir / "J.csv").exists():
            j = read_table(rate_dir / "J.csv")
            fin = np.isfinite(j["J"])
            ax.plot(j["y"][fin], j["J"][fin], "k-", label=r"$\mathcal{J}$")
        ax.set_xlabel("$y$")
        ax.set_ylabel(r"$-\frac{1}{T}\log \hat p$")
        ax.legend()
        out.append(_save(fig, d / "rate_curve.png"))
    ex = d / "exit.csv"
    if ex.exists():
        t = read_table(ex)
        fig, ax = plt.subplots()
        R = np.linspace(0, t["R"].max() * 1.1, 100)
        ax.plot(R, -R ** 2 / 2, "k--", lw=0.8, label=r"$-R^2/2$")
        ax.plot(t["R"], t["rate_analytic"], "s", mfc="none", label="image series")
        ax.plot(t["R"], t["rate_mc"], "o", label="MC")
        ax.set_xlabel("$R$")
        ax.set_ylabel("rate")
        ax.legend()
        out.append(_save(fig, d / "exit.png"))
    oc = d / "occupation.csv"
    if oc.exists():
        t = read_table(oc)
        if t:
            fig, ax = plt.subplots()
            w = np.diff(t["bin_center"]).mean() if t["bin_center"].size > 1 else 1.0
            ax.bar(t["bin_center"], t["mass"], width=w)
            ax.set_xlabel("$x$")
            ax.set_ylabel("occupation mass")
            out.append(_save(fig, d / "occupation.png"))
    return out


def plot_eigen(d: Path) -> list[Path]:
    p = d / "eigen.csv"
    if not p.exists():
        return []
    t = read_table(p)
    fig, ax = plt.subplots()
    for s in np.unique(t["sample"]):
        m = t["sample"] == s
        ax.plot(t["r"][m], t["lambda_centre"][m], "o-", label=f"sample {int(s)}")
    r = np.linspace(t["r"].min(), t["r"].max(), 100)
    ax.plot(r, math.pi ** 2 / (8 * r ** 2), "k--", lw=0.8, label=r"$\pi^2/8r^2$")
    ax.set_xlabel("$r$")
    ax.set_ylabel(r"$\lambda(V, I_r)$")
    ax.legend()
    return [_save(fig, d / "eigen.png")]


def render_report(root: Path) -> list[Path]:
    """Render every figure whose source CSVs exist under ``root``."""
    root = Path(root)
    with plt.rc_context(STYLE):
        out = []
        out += plot_fields(root / "field")
        out += plot_eigen(root / "eigen")
        out += plot_rate(root / "rate")
        out += plot_mc(root / "mc", root / "rate")
    return out
