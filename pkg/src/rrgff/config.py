"""Experiment configuration, read from YAML or JSON."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import InvalidConfig
from .extremes import DEFAULT_INTERVALS

DEFAULT_TOLERANCES = {
    "ks_max": 0.05,
    "ks_pvalue_min": 0.001,
    "count_0_inf": [0.8, 1.2],
    "count_m1_0": [1.4, 2.1],
    "laplace_gap_max": 0.03,
    "interval_pvalue_min": 0.001,
}


def _interval_to_text(iv):
    return [iv[0], "inf" if math.isinf(iv[1]) else iv[1]]


def _interval_from_text(iv):
    return (float(iv[0]), float(iv[1]))


@dataclass
class ExperimentConfig:
    mode: str = "tree"  # tree | graph | iid | compare
    n: int = 1024
    r: int = 3
    replicas: int = 200
    master_seed: int = 20240601
    ell: int | None = None  # census radius; default floor(0.3 log2 N)
    ell0: int = 1
    k1: float = 0.3
    k3: float = 0.2
    delta: float = 0.1
    K1: float = 3.0
    intervals: list = field(default_factory=lambda: [tuple(iv) for iv in DEFAULT_INTERVALS])
    truncate_below: float = -6.0
    chunk: int = 100
    out_dir: str = "out"
    format: str = "json"
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    # comparison suite
    grid_rho: list = field(default_factory=lambda: [0.0, 0.3, 0.7, 0.9])
    grid_u: list = field(default_factory=lambda: [1.0, 2.0, 3.0])
    grid_S: list = field(default_factory=lambda: [(0.0, 1.0), (-0.5, 0.5)])
    mc_draws: int = 1_000_000
    identity_sizes: list = field(default_factory=lambda: [2, 3])
    identity_instances: int = 10
    tozero_n: int = 32
    ladder: list = field(default_factory=lambda: [2 ** 10, 2 ** 12, 2 ** 14, 2 ** 16, 2 ** 18])

    def census_radius(self) -> int:
        if self.ell is not None:
            return self.ell
        return int(math.floor(0.3 * math.log2(self.n)))

    def validate(self) -> "ExperimentConfig":
        if self.mode not in ("tree", "graph", "iid", "compare"):
            raise InvalidConfig(f"unknown mode {self.mode!r}")
        if self.mode != "compare":
            if self.replicas < 1:
                raise InvalidConfig("replicas must be >= 1")
            if self.n < 3:
                raise InvalidConfig("n must be >= 3")
        if self.r < 3:
            raise InvalidConfig("r must be >= 3")
        if self.mode == "graph" and (self.n * self.r) % 2:
            raise InvalidConfig("n*r must be even for graph mode")
        if self.chunk < 1:
            raise InvalidConfig("chunk must be >= 1")
        if self.format not in ("json", "csv"):
            raise InvalidConfig("format must be json or csv")
        if self.ell is not None and self.ell < 0:
            raise InvalidConfig("ell must be >= 0")
        for a, b in self.intervals:
            if not a < b or not math.isfinite(a):
                raise InvalidConfig(f"bad interval ({a}, {b})")
            if a < self.truncate_below:
                raise InvalidConfig("interval starts below truncate_below")
        if self.mode == "compare" and not (self.grid_rho and self.grid_u and self.grid_S):
            raise InvalidConfig("comparison grid is empty")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["intervals"] = [_interval_to_text(iv) for iv in self.intervals]
        d["grid_S"] = [list(s) for s in self.grid_S]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "intervals" in d:
            d["intervals"] = [_interval_from_text(iv) for iv in d["intervals"]]
        if "grid_S" in d:
            d["grid_S"] = [tuple(float(x) for x in s) for s in d["grid_S"]]
        if "tolerances" in d:
            tol = dict(DEFAULT_TOLERANCES)
            tol.update(d["tolerances"])
            d["tolerances"] = tol
        try:
            return cls(**d)
        except TypeError as e:
            raise InvalidConfig(str(e)) from None


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    try:
        data = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise InvalidConfig(f"cannot parse {path}: {e}") from None
    return ExperimentConfig.from_dict(data or {})


def dump_config(cfg: ExperimentConfig, path=None) -> str:
    text = yaml.safe_dump(cfg.to_dict(), sort_keys=True)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
