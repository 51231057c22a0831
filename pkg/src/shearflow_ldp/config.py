"""Experiment configuration: nested sections with defaults, strict keys and a content hash."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass
from dataclasses import field as _field
from pathlib import Path
from typing import Any

from . import __version__
from . import field_synth as fs

STAGES = ("field", "eigen", "rate", "mc", "verify")
OUT_ENV = "SHEARFLOW_LDP_OUT"
# keys that do not change any numerical output
_UNHASHED = ("out", "workers")


class ConfigError(ValueError):
    pass


@dataclass
class FieldSection:
    half_width: float = 50.0
    spacing: float = 0.25
    n_samples: int = 4
    cutoff_sharpness: float = 1.0  # shape parameter of the split-field bump
    split_L: list = _field(default_factory=lambda: [4.0, 8.0, 16.0])


@dataclass
class EigenSection:
    n_grid: int = 400
    alpha: float = 1.0
    T: float = 1000.0  # potential is alpha v / sqrt(log T)
    r_values: list = _field(default_factory=lambda: [2.0, 4.0, 8.0])
    R: float = 40.0
    include_clipped: bool = False
    threshold: str = "discrete"  # J_r threshold: "discrete" floor of the grid or "continuum" c / r^2


@dataclass
class RateSection:
    alphas: Any = "default"  # "default" or a list of non-negative multipliers
    y_grid: list = _field(default_factory=lambda: [round(0.065 * k, 6) for k in range(-20, 21)])
    rungs: list = _field(default_factory=lambda: [4, 8, 16, 32])
    points_per_width: float = 16.0
    rtol: float = 1e-3
    weights: str = "cell"


@dataclass
class ExitSection:
    T: float = 1000.0
    R_list: list = _field(default_factory=lambda: [0.05, 0.12649110640673517, 0.16])
    n_paths: int = 200000
    steps: int = 10


@dataclass
class StrategySection:
    T: float = 80.0
    dt: float = 0.05
    z: float = 0.0
    r: float = 4.0
    n_paths: int = 20000
    travel: Any = None  # None means T / log T


@dataclass
class MCSection:
    T_list: list = _field(default_factory=lambda: [100.0, 300.0, 1000.0])
    steps: int = 500
    n_paths: int = 4000
    epsilon: float = 0.05
    y_grid: list = _field(default_factory=lambda: [-1.7, -0.6, -0.4, -0.2, 0.0, 0.2, 0.4, 0.6, 1.7])
    exit: ExitSection = _field(default_factory=ExitSection)
    strategy: StrategySection = _field(default_factory=StrategySection)


@dataclass
class VerifySection:
    criteria: list = _field(default_factory=lambda: list(range(1, 13)))


@dataclass
class ExperimentConfig:
    version: str = "1"
    seed: int = 20240617
    out: Any = None
    workers: int = 1
    stages: list = _field(default_factory=lambda: list(STAGES))
    density: dict = _field(default_factory=lambda: {"family": "gaussian", "params": {}})
    field: FieldSection = _field(default_factory=FieldSection)
    eigen: EigenSection = _field(default_factory=EigenSection)
    rate: RateSection = _field(default_factory=RateSection)
    mc: MCSection = _field(default_factory=MCSection)
    verify: VerifySection = _field(default_factory=VerifySection)

    def __post_init__(self):
        bad = [s for s in self.stages if s not in STAGES]
        if bad:
            raise ConfigError(f"unknown stages {bad}; allowed {list(STAGES)}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.eigen.threshold not in ("discrete", "continuum"):
            raise ConfigError("eigen.threshold must be 'discrete' or 'continuum'")
        if self.rate.weights not in ("cell", "point"):
            raise ConfigError("rate.weights must be 'cell' or 'point'")
        if any(c not in range(1, 13) for c in self.verify.criteria):
            raise ConfigError("verify.criteria must be drawn from 1..12")
        try:
            fs.SpectralDensity.from_json(self.density)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad density spec: {exc}") from exc

    # -- derived
    @property
    def spectral_density(self) -> fs.SpectralDensity:
        return fs.SpectralDensity.from_json(self.density)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def section_hash(self, *names: str) -> str:
        d = self.to_dict()
        payload = {k: d[k] for k in names} if names else {k: v for k, v in d.items() if k not in _UNHASHED}
        return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()

    @property
    def hash(self) -> str:
        return self.section_hash()

    def output_root(self) -> Path:
        if self.out:
            return Path(self.out)
        return Path(os.environ.get(OUT_ENV, "shearflow_ldp_out"))

    def header(self) -> dict:
        return {"config_hash": self.hash[:16], "seed": self.seed, "code_version": __version__}


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"unknown keys at {path or 'top level'}: {unknown}")
    kwargs = {}
    for key, val in data.items():
        f = names[key]
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        if dataclasses.is_dataclass(default):
            kwargs[key] = _build(type(default), val, f"{path}.{key}" if path else key)
        else:
            kwargs[key] = val
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data, "")


def load_config(path: str | Path | None, overrides: dict | None = None) -> ExperimentConfig:
    """Read JSON, then apply flag overrides (flags win)."""
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    return from_dict(data)
