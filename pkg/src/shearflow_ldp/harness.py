"""Stage orchestration, artifact bookkeeping and the verify report."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import acceptance as acc
from . import field_synth as fs
from . import path_mc as pm
from . import schrodinger as sch
from .config import STAGES, ExperimentConfig
from .varcalc import core, rate

log = logging.getLogger(__name__)

# upstream stages whose artifacts a stage reads
DEPENDS = {"field": (), "eigen": ("field",), "rate": (), "mc": (), "verify": ()}
# config sections each stage depends on
SECTIONS = {"field": ("density", "field", "seed"), "eigen": ("density", "field", "eigen", "seed"),
            "rate": ("density", "rate"), "mc": ("density", "mc", "seed"),
            "verify": ("density", "rate", "mc", "field", "verify", "seed")}


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class StageRecord:
    name: str
    status: str  # ran | cached | failed | skipped
    seconds: float = 0.0
    hash: str = ""
    artifacts: dict = field(default_factory=dict)  # relative path -> sha256
    error: str = ""


@dataclass
class RunManifest:
    config_hash: str
    code_version: str
    seed: int
    root: str
    stages: list = field(default_factory=list)

    @property
    def artifacts(self) -> dict:
        out = {}
        for s in self.stages:
            out.update(s.artifacts)
        return out

    @property
    def cached(self) -> bool:
        return bool(self.stages) and all(s.status == "cached" for s in self.stages)

    @property
    def complete(self) -> bool:
        return all(s.status in ("ran", "cached") for s in self.stages)

    def stage(self, name: str) -> StageRecord:
        return next(s for s in self.stages if s.name == name)

    def to_json(self) -> dict:
        return {"config_hash": self.config_hash, "code_version": self.code_version, "seed": self.seed,
                "cached": self.cached, "complete": self.complete,
                "stages": [s.__dict__ for s in self.stages],
                "artifacts": self.artifacts}

    def verify_checksums(self) -> bool:
        root = Path(self.root)
        return all((root / p).exists() and sha256_file(root / p) == d for p, d in self.artifacts.items())


# ---------------------------------------------------------------------------
# stage bodies; each returns the list of files it wrote


def _stage_field(cfg: ExperimentConfig, d: Path) -> list[Path]:
    h = cfg.spectral_density
    fc = cfg.field
    grid = fs.Grid.symmetric(fc.half_width, fc.spacing)
    samples = fs.sample_field(h, grid, cfg.seed, fc.n_samples, workers=cfg.workers)
    files = []
    for s in samples:
        p = d / f"field_{s.index:03d}.csv"
        fs.write_field_csv(s, p, cfg.header())
        files.append(p)
    emp = fs.empirical_covariance(samples, min(10.0, fc.half_width)) if len(samples) >= 2 else None
    if emp is not None:
        exact = h.analytic_covariance(emp.lags)
        rows = [(x, v, se, (float(e) if exact is not None else math.nan))
                for x, v, se, e in zip(emp.lags, emp.values, emp.stderr,
                                       exact if exact is not None else emp.values)]
        p = d / "covariance.csv"
        pm.write_rows(p, ["lag", "K_empirical", "stderr", "K_exact"], rows[emp.n_half:], cfg.header())
        files.append(p)
    cut = fs.CutoffSpec(fc.cutoff_sharpness)
    rows = []
    for L in fc.split_L:
        sp = fs.split_field(h, float(L), fs.Grid.symmetric(min(fc.half_width, 4 * L), fc.spacing / 2), cfg.seed, cut)
        rows.append((float(L), sp.k_tilde0, sp.K_L.support_bound))
    p = d / "split.csv"
    pm.write_rows(p, ["L", "K_tilde0", "support_bound"], rows, {**cfg.header(), "cutoff_sharpness": fc.cutoff_sharpness})
    files.append(p)
    return files


def _stage_eigen(cfg: ExperimentConfig, d: Path) -> list[Path]:
    ec = cfg.eigen
    scale = ec.alpha / math.sqrt(math.log(ec.T))
    samples = [fs.read_field_csv(p) for p in sorted((d.parent / "field").glob("field_*.csv"))]
    rows = []
    for s in samples:
        lo, hi = s.origin, s.origin + s.grid_spacing * (s.count - 1)
        for r in ec.r_values:
            r = float(r)
            res = sch.principal_eigenvalue(sch.Potential.from_field(s, (-r, r), ec.n_grid, scale))
            big = ec.R + r
            n_big = int(round(ec.n_grid * big / r))
            if -big < lo or big > hi:
                rows.append((s.index, r, res.lam, math.nan, math.nan))
                continue
            sub = sch.min_subbox_eigenvalue(sch.Potential.from_field(s, (-big, big), n_big, scale), r,
                                            ec.include_clipped)
            rows.append((s.index, r, res.lam, sub.min_lambda, sub.argmin_z))
    p = d / "eigen.csv"
    pm.write_rows(p, ["sample", "r", "lambda_centre", "min_subbox_lambda", "argmin_z"], rows,
                  {**cfg.header(), "alpha": ec.alpha, "T": ec.T, "R": ec.R})
    return [p]


def _stage_rate(cfg: ExperimentConfig, d: Path) -> list[Path]:
    rc = cfg.rate
    alphas = rate.default_alphas() if rc.alphas == "default" else np.asarray(rc.alphas, dtype=float)
    tbl = rate.build_rate_table(core.kernel_from_density(cfg.spectral_density), alphas, rc.y_grid, rungs=tuple(rc.rungs),
                                points_per_width=rc.points_per_width, mode=rc.weights, rtol=rc.rtol,
                                workers=cfg.workers)
    lp, jp = d / "lambda.csv", d / "J.csv"
    tbl.write_csv(lp, jp, {**cfg.header(), "weights": rc.weights, "rtol": rc.rtol})
    return [lp, jp]


def _stage_mc(cfg: ExperimentConfig, d: Path) -> list[Path]:
    mc = cfg.mc
    h = cfg.spectral_density
    head = cfg.header()
    est = pm.estimate_rate_curve(h, mc.y_grid, mc.epsilon, mc.T_list, mc.n_paths, cfg.seed, steps=mc.steps,
                                 workers=cfg.workers)
    files = [d / "rate_curve.csv", d / "exit.csv", d / "occupation.csv", d / "strategy.csv"]
    pm.write_rows(files[0], ["y", "T", "hits", "n", "p_hat", "rate", "lo", "hi"], est.rows(),
                  {**head, "epsilon": mc.epsilon, "off_grid": json.dumps(est.off_fraction)})
    ex = mc.exit
    rates = pm.exit_time_rate(ex.R_list, ex.T, ex.n_paths, cfg.seed, steps=ex.steps, workers=cfg.workers)
    pm.write_rows(files[1], ["R", "rate_mc", "rate_analytic"], [(e.R, e.rate_mc, e.rate_analytic) for e in rates],
                  {**head, "T": ex.T, "n_paths": ex.n_paths})
    st = mc.strategy
    field_ = pm.field_for_paths(h, st.T, cfg.seed)
    res = pm.strategy_lower_bound(field_, (st.z, st.r), st.T, st.dt, st.n_paths, cfg.seed, travel=st.travel,
                                  workers=cfg.workers)
    occ = res.occupation
    rows = list(zip(occ.centers, occ.mass)) if occ is not None else []
    pm.write_rows(files[2], ["bin_center", "mass"], rows, {**head, "z": st.z, "r": st.r, "T": st.T})
    pm.write_rows(files[3], ["z", "r", "T", "confinement_log_rate", "decay_rate", "dirichlet_rate",
                             "window_mean", "window_std", "inside_mass", "bound"],
                  [(st.z, st.r, st.T, res.confinement_log_rate, res.decay_rate, math.pi ** 2 / (8 * st.r ** 2),
                    res.window_mean, res.window_std, res.inside_mass, int(res.bound))], head)
    return files


def verify(cfg: ExperimentConfig, artifacts: Path | None = None, out_dir: Path | None = None) -> dict:
    """Run the selected criteria; write ``report.json`` and ``report.txt`` when ``out_dir`` is given."""
    ctx = acc.Context(cfg, artifacts)
    results = acc.run_all(ctx, cfg.verify.criteria)
    report = {"config_hash": cfg.hash, "seed": cfg.seed, "code_version": __version__,
              "passed": all(r.passed for r in results),
              "criteria": [r.to_json() for r in results]}
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        body = {**report, "criteria": [{k: v for k, v in c.items() if k != "seconds"} for c in report["criteria"]]}
        (out_dir / "report.json").write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
        lines = [f"# config_hash={cfg.hash[:16]} seed={cfg.seed} code_version={__version__}"]
        lines += [r.line() for r in results]
        lines.append(f"overall: {'PASS' if report['passed'] else 'FAIL'} "
                     f"({sum(r.passed for r in results)}/{len(results)})")
        (out_dir / "report.txt").write_text("\n".join(lines) + "\n")
    report["results"] = results
    return report


def _stage_verify(cfg: ExperimentConfig, d: Path) -> list[Path]:
    rep = verify(cfg, d.parent, d)
    files = [d / "report.json", d / "report.txt"]
    if not rep["passed"]:
        raise CriterionFailure(files)
    return files


class CriterionFailure(RuntimeError):
    def __init__(self, files):
        super().__init__("one or more acceptance criteria failed")
        self.files = files


BODIES = {"field": _stage_field, "eigen": _stage_eigen, "rate": _stage_rate, "mc": _stage_mc,
          "verify": _stage_verify}


# ---------------------------------------------------------------------------
# orchestration


def stage_hash(cfg: ExperimentConfig, name: str, upstream: dict) -> str:
    payload = {"sections": cfg.section_hash(*SECTIONS[name]), "version": __version__,
               "upstream": {u: upstream.get(u, "") for u in DEPENDS[name]}}
    if name == "verify":
        payload["upstream"] = dict(sorted(upstream.items()))
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _load_record(d: Path) -> dict | None:
    p = d / "stage.json"
    if not p.exists():
        return None
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError:
        return None


def _closure(stages) -> list[str]:
    want = set(stages)
    changed = True
    while changed:
        changed = False
        for s in list(want):
            for u in DEPENDS[s]:
                if u not in want:
                    want.add(u)
                    changed = True
    return [s for s in STAGES if s in want]


def run_experiment(cfg: ExperimentConfig, stages=None, force: bool = False) -> RunManifest:
    """Run the requested stages (plus what they read) in dependency order.

    A stage is skipped as cached when its recorded hash matches and every
    artifact it listed still has the recorded checksum.
    """
    root = cfg.output_root()
    root.mkdir(parents=True, exist_ok=True)
    order = _closure(cfg.stages if stages is None else stages)
    man = RunManifest(cfg.hash, __version__, cfg.seed, str(root))
    hashes: dict[str, str] = {}
    failed: set[str] = set()
    for name in order:
        d = root / name
        blockers = [u for u in DEPENDS[name] if u in failed]
        if blockers:
            man.stages.append(StageRecord(name, "skipped", error=f"upstream failed: {blockers}"))
            failed.add(name)
            continue
        hv = stage_hash(cfg, name, hashes)
        rec = _load_record(d)
        if (not force and rec is not None and rec.get("hash") == hv and rec.get("status") == "ran"
                and all((root / p).exists() and sha256_file(root / p) == c for p, c in rec["artifacts"].items())):
            man.stages.append(StageRecord(name, "cached", rec.get("seconds", 0.0), hv, dict(rec["artifacts"])))
            hashes[name] = hv
            continue
        d.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        status, err, files = "ran", "", []
        try:
            files = BODIES[name](cfg, d)
        except CriterionFailure as exc:
            status, err, files = "failed", str(exc), exc.files
        except Exception as exc:  # a failing stage halts its dependents only
            status, err = "failed", "".join(traceback.format_exception_only(type(exc), exc)).strip()
            log.error("stage %s failed: %s", name, err)
        dt = time.perf_counter() - t0
        arts = {str(p.relative_to(root)): sha256_file(p) for p in files}
        rec = StageRecord(name, status, dt, hv, arts, err)
        (d / "stage.json").write_text(json.dumps(rec.__dict__, indent=2, sort_keys=True) + "\n")
        man.stages.append(rec)
        if status == "ran":
            hashes[name] = hv
        else:
            failed.add(name)
    (root / "manifest.json").write_text(json.dumps(man.to_json(), indent=2, sort_keys=True) + "\n")
    return man
