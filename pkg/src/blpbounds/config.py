"""Run configuration: a YAML tree with every default filled in.

Grammar (all sections optional except where a subcommand needs them)::

    seed: 20240101              # single source of randomness
    data:
      path: data.csv            # relative to the config file
      roles: {x: [const, x1], y_lower: lo, y_upper: hi}
    method:
      name: mean_interval       # see bounds.METHODS
      link: logit
      y_lo: -inf
      y_hi: inf
      direction: nondecreasing
      restriction: null         # {kind: stochastic_dominance} | {kind: quantile_restriction, alpha0, alpha1}
      intersect_v: false
      treatment_effect: false
      sort_crossings: false
    basis: {family: polynomial, degree: 1, knots: null, interactions: null, standardize: true}
    grid: {kind: quantile, values: [0.25, 0.5, 0.75]}   # or {kind, start, stop, num}
    directions: {kind: axes}    # axes | circle (K) | sphere (K)
    bootstrap: {B: 200, level: 0.95, weight_scheme: exponential, band_weight: inv_sd}
    jitter: {enabled: false, delta: 0.05, columns: null}
    test: {coefficients: [1], level: 0.95}
    mc: {dgp: {...DGPSpec fields...}, R: 200, n: 500, B: 300, level: 0.90}
    output: {dir: out}
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .basis import BasisSpec
from .bounds import BoundMethod, IndexGrid
from .errors import ConfigError
from .pipeline import Pipeline
from .support import DirectionSet

DEFAULTS: dict = {
    "seed": 0,
    "data": {"path": None, "roles": {}},
    "method": {"name": "mean_interval", "link": "logit", "y_lo": "-inf", "y_hi": "inf",
               "direction": "nondecreasing", "restriction": None, "intersect_v": False,
               "v_support": None, "treatment_effect": False, "sort_crossings": False,
               "logical_bounds": None},
    "basis": {"family": "polynomial", "degree": 1, "knots": None, "interactions": None,
              "standardize": True},
    "grid": {"kind": "mean", "values": None, "start": None, "stop": None, "num": None},
    "directions": {"kind": "axes", "K": 64},
    "bootstrap": {"B": 200, "level": 0.95, "weight_scheme": "exponential",
                  "band_weight": "inv_sd"},
    "jitter": {"enabled": False, "delta": 0.05, "columns": None},
    "test": {"coefficients": [1], "level": 0.95},
    "mc": {"dgp": {}, "R": 200, "n": 500, "B": 300, "level": 0.90, "uniform": True},
    "output": {"dir": "out"},
}


def _merge(base: dict, over: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key '{path}{k}'")
        if isinstance(base[k], dict) and base[k] and k not in ("roles", "dgp"):
            if not isinstance(v, dict):
                raise ConfigError(f"config key '{path}{k}' must be a mapping")
            out[k] = _merge(base[k], v, f"{path}{k}.")
        else:
            out[k] = copy.deepcopy(v)
    return out


def _num(v):
    """YAML leaves '-inf' as a string; accept it."""
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            raise ConfigError(f"expected a number, got '{v}'") from None
    return float(v)


def parse_override(item: str) -> tuple[list[str], object]:
    if "=" not in item:
        raise ConfigError(f"override '{item}' is not of the form key.path=value")
    key, raw = item.split("=", 1)
    try:
        val = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override '{item}': {exc}") from None
    return key.strip().split("."), val


def apply_overrides(tree: dict, overrides) -> dict:
    tree = copy.deepcopy(tree)
    for item in overrides or ():
        keys, val = parse_override(item)
        node = tree
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override '{item}' descends into a scalar")
        node[keys[-1]] = val
    return tree


@dataclass(frozen=True)
class RunConfig:
    tree: dict
    base_dir: Path

    @classmethod
    def from_dict(cls, raw: dict | None, base_dir=".", overrides=()) -> "RunConfig":
        raw = apply_overrides(raw or {}, overrides)
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
        cfg = cls(_merge(DEFAULTS, raw), Path(base_dir))
        cfg.check()
        return cfg

    @classmethod
    def load(cls, path, overrides=()) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file '{path}' not found")
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8"))
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path.name}: {str(exc).splitlines()[0]}") from None
        return cls.from_dict(raw, path.parent, overrides)

    # -- accessors
    def __getitem__(self, key):
        return self.tree[key]

    @property
    def seed(self) -> int:
        return int(self.tree["seed"])

    def check(self) -> None:
        b = self.tree["bootstrap"]
        if not 0 < float(b["level"]) < 1:
            raise ConfigError("bootstrap.level must lie in (0, 1)")
        if int(b["B"]) < 50:
            raise ConfigError("bootstrap.B must be at least 50")
        if not 0 < float(self.tree["test"]["level"]) < 1:
            raise ConfigError("test.level must lie in (0, 1)")
        if self.tree["directions"]["kind"] not in ("axes", "circle", "sphere"):
            raise ConfigError("directions.kind must be axes, circle or sphere")
        try:
            int(self.tree["seed"])
        except (TypeError, ValueError):
            raise ConfigError("seed must be an integer") from None

    def canonical(self) -> str:
        return json.dumps(self.tree, sort_keys=True, separators=(",", ":"), default=str)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def data_path(self) -> Path:
        p = self.tree["data"]["path"]
        if not p:
            raise ConfigError("data.path is required for this subcommand")
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def output_dir(self, env_override=None) -> Path:
        p = Path(env_override or self.tree["output"]["dir"])
        return p if p.is_absolute() else self.base_dir / p

    # -- builders
    def grid(self) -> IndexGrid:
        g = self.tree["grid"]
        if g["kind"] == "mean":
            return IndexGrid.mean()
        if g.get("values") is not None:
            vals = [_num(v) for v in g["values"]]
        elif all(g.get(k) is not None for k in ("start", "stop", "num")):
            vals = np.linspace(_num(g["start"]), _num(g["stop"]), int(g["num"]))
        else:
            raise ConfigError("grid needs values or start/stop/num")
        try:
            return IndexGrid(np.asarray(vals, dtype=float), g["kind"])
        except ValueError as exc:
            raise ConfigError(f"grid: {exc}") from None

    def directions(self, d: int) -> DirectionSet:
        s = self.tree["directions"]
        K = int(s.get("K") or 64)
        if s["kind"] == "axes":
            return DirectionSet.axes_pm(d)
        if s["kind"] == "circle":
            if d != 2:
                raise ConfigError("circle directions need d = 2")
            return DirectionSet.circle(K)
        return DirectionSet.sphere_sample(d, K, self.seed)

    def pipeline(self, d: int) -> Pipeline:
        m = self.tree["method"]
        try:
            method = BoundMethod(m["name"], m["link"], _num(m["y_lo"]), _num(m["y_hi"]),
                                 m["direction"])
            basis = BasisSpec.from_dict(self.tree["basis"])
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        lb = m.get("logical_bounds")
        return Pipeline(method, self.grid(), basis, self.directions(d),
                        restriction=m["restriction"], intersect_v=bool(m["intersect_v"]),
                        v_support=None if m["v_support"] is None else tuple(m["v_support"]),
                        treatment_effect=bool(m["treatment_effect"]),
                        sort_crossings=bool(m["sort_crossings"]),
                        logical_bounds=None if lb is None else (_num(lb[0]), _num(lb[1])))

    def jitter_seed(self) -> int:
        return int(np.random.SeedSequence([self.seed, 1]).generate_state(1)[0])


def json_ready(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats."""
    if isinstance(obj, dict):
        return {str(k): json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return json_ready(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj
