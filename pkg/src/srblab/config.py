"""Experiment configuration read from TOML.

A minimal file only names the system::

    system = "cat"

Everything else falls back to the built-in defaults, refined by a per-system
preset (grid, horizon and thresholds that resolve that system's structure).
Unknown keys are rejected with a nearest-match suggestion.
"""

from __future__ import annotations

import difflib
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dynamics import SYSTEM_NAMES
from .errors import ConfigError

# section -> key -> default (None: filled from the preset or derived)
SCHEMA: dict[str, dict[str, Any]] = {
    "system": {"name": None, "params": {}},
    "grid": {"resolution": None},
    "metric": {"truncation": 24},
    "schedule": {"n0": 1000, "gamma": 1.25, "horizon": None, "burn_in": 0},
    "pomega": {"delta_cluster": 0.05, "delta_conv": 0.02, "tail_fraction": 0.5},
    "observable": {
        "samples": 200,
        "seed": 0,
        "epsilon": [0.2, 0.1, 0.05, 0.025],
        "phi_srb": 0.05,
        "decay_ratio": 0.6,
        "holdout_samples": 100,
        "holdout_seed": None,
        "coverage_epsilon": 0.1,
    },
    "empiric": {"x0": None, "reference": "final", "dump_measures": False},
    "endpoints": {"a": None, "b": None},
    "run": {"threads": None, "output": None, "wall_time": False},
}

PRESETS: dict[str, dict[str, dict[str, Any]]] = {
    "identity": {"grid": {"resolution": 16}, "schedule": {"horizon": 10_000}},
    "tripling": {"grid": {"resolution": 64}, "schedule": {"horizon": 100_000}},
    "cat": {"grid": {"resolution": 64}, "schedule": {"horizon": 100_000}},
    "contraction_half": {
        "grid": {"resolution": [4, 4096]},
        "schedule": {"horizon": 10_000},
        "pomega": {"delta_cluster": 2e-4, "delta_conv": 2e-3},
        "observable": {"epsilon": [0.04, 0.01, 0.0025]},
    },
    "skew_cat": {
        "grid": {"resolution": [16, 32, 32]},
        "schedule": {"horizon": 100_000},
        "pomega": {"delta_cluster": 0.01},
        "observable": {"samples": 100, "epsilon": [0.4, 0.1, 0.025], "coverage_epsilon": 0.15},
    },
    "bowen_eye": {
        "system": {"params": {"dt": 0.01}},
        "grid": {"resolution": 25},
        "schedule": {"horizon": 200_000, "burn_in": 1000},
        "pomega": {"delta_cluster": 0.005},
        "observable": {"samples": 20},
        "endpoints": {"a": [-1.0, 0.0], "b": [1.0, 0.0]},
    },
    "affine_custom": {"grid": {"resolution": 32}, "schedule": {"horizon": 10_000}},
}

ALL_KEYS = sorted({k for sec in SCHEMA.values() for k in sec} | set(SCHEMA))


@dataclass
class ExperimentConfig:
    system: str
    params: dict = field(default_factory=dict)
    resolution: tuple[int, ...] = ()
    truncation: int = 24
    n0: int = 1000
    gamma: float = 1.25
    horizon: int = 10_000
    burn_in: int = 0
    delta_cluster: float = 0.05
    delta_conv: float = 0.02
    tail_fraction: float = 0.5
    samples: int = 200
    seed: int = 0
    epsilon: tuple[float, ...] = (0.2, 0.1, 0.05, 0.025)
    phi_srb: float = 0.05
    decay_ratio: float = 0.6
    holdout_samples: int = 100
    holdout_seed: Optional[int] = None
    coverage_epsilon: float = 0.1
    x0: Optional[tuple[float, ...]] = None
    reference: str = "final"
    dump_measures: bool = False
    endpoint_a: Optional[tuple[float, ...]] = None
    endpoint_b: Optional[tuple[float, ...]] = None
    threads: Optional[int] = None
    output: Optional[str] = None
    wall_time: bool = False

    def echo(self) -> dict:
        """Config as recorded in outputs; execution-only knobs are left out
        so results do not depend on them."""
        data = asdict(self)
        for k in ("threads", "output", "wall_time"):
            data.pop(k)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in data.items()}

    @property
    def effective_holdout_seed(self) -> int:
        if self.holdout_seed is not None:
            return self.holdout_seed
        return (self.seed + 0x9E3779B97F4A7C15) % 2**64


def _suggest(key, candidates):
    match = difflib.get_close_matches(key, candidates, n=1, cutoff=0.6)
    return f"; did you mean {match[0]!r}?" if match else ""


def _line_of(text: str, key: str) -> Optional[int]:
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith(key) and s[len(key):].lstrip().startswith("="):
            return n
        if s.startswith("[") and key in s.strip("[] ").split("."):
            return n
    return None


def _merge(base: dict, over: dict) -> dict:
    out = {k: dict(v) if isinstance(v, dict) else v for k, v in base.items()}
    for sec, vals in over.items():
        for k, v in vals.items():
            if sec == "system" and k == "params":
                out[sec][k] = {**out[sec][k], **v}
            else:
                out[sec][k] = v
    return out


def load_config(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"{source}: parse error: {exc}", line=line) from None
    return from_mapping(raw, text)


def parse_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    return load_config(text, str(p))


def from_mapping(raw: dict, text: str = "") -> ExperimentConfig:
    raw = dict(raw)
    if isinstance(raw.get("system"), str):
        raw["system"] = {"name": raw["system"]}
    user: dict[str, dict] = {}
    for sec, vals in raw.items():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section or key {sec!r}{_suggest(sec, ALL_KEYS)}",
                              field=sec, line=_line_of(text, sec))
        if not isinstance(vals, dict):
            raise ConfigError(f"{sec!r} must be a table", field=sec, line=_line_of(text, sec))
        for key in vals:
            if key not in SCHEMA[sec]:
                raise ConfigError(
                    f"unknown key {sec}.{key}{_suggest(key, list(SCHEMA[sec]))}",
                    field=f"{sec}.{key}", line=_line_of(text, key),
                )
        user[sec] = dict(vals)
    name = user.get("system", {}).get("name")
    if name is None:
        raise ConfigError("system name is required", field="system.name")
    if name not in SYSTEM_NAMES:
        raise ConfigError(f"unknown system {name!r}{_suggest(name, list(SYSTEM_NAMES))}",
                          field="system.name", line=_line_of(text, "system"))
    merged = _merge(_merge(SCHEMA, PRESETS.get(name, {})), user)
    return _build(merged, text)


def _build(m: dict, text: str) -> ExperimentConfig:
    from .dynamics import make_system

    def fail(fieldname, msg):
        key = fieldname.split(".")[-1]
        raise ConfigError(f"{fieldname}: {msg}", field=fieldname, line=_line_of(text, key))

    name = m["system"]["name"]
    params = dict(m["system"]["params"])
    try:
        system = make_system(name, params)
    except (ValueError, KeyError) as exc:
        fail("system.params", str(exc))
    dim = system.domain.dimension

    res = m["grid"]["resolution"]
    if res is None:
        res = 32
    res = [res] * dim if isinstance(res, int) else list(res)
    if len(res) != dim:
        fail("grid.resolution", f"needs {dim} entries for {name}")
    if any(not isinstance(r, int) or r < 2 for r in res):
        fail("grid.resolution", "every axis needs an integer resolution >= 2")

    def num(sec, key, lo=None, strict=True, integer=False):
        v = m[sec][key]
        ok_type = isinstance(v, int) if integer else isinstance(v, (int, float))
        if isinstance(v, bool) or not ok_type:
            fail(f"{sec}.{key}", f"expected {'an integer' if integer else 'a number'}, got {v!r}")
        if lo is not None and (v <= lo if strict else v < lo):
            fail(f"{sec}.{key}", f"must be {'>' if strict else '>='} {lo}, got {v!r}")
        return v

    sched = m["schedule"]
    n0 = num("schedule", "n0", 0, integer=True)
    gamma = float(num("schedule", "gamma", 1.0))
    if sched["horizon"] is None:
        sched["horizon"] = max(n0, 10_000)
    horizon = num("schedule", "horizon", 0, integer=True)
    if horizon < n0:
        fail("schedule.horizon", f"horizon {horizon} is smaller than n0 {n0}")
    burn = num("schedule", "burn_in", 0, strict=False, integer=True)

    trunc = num("metric", "truncation", 0, integer=True)
    dc = float(num("pomega", "delta_cluster", 0))
    dv = float(num("pomega", "delta_conv", 0))
    tf = float(num("pomega", "tail_fraction", 0))
    if tf > 1:
        fail("pomega.tail_fraction", "must be at most 1")

    ob = m["observable"]
    samples = num("observable", "samples", 0, integer=True)
    seed = num("observable", "seed", 0, strict=False, integer=True)
    if seed >= 2**64:
        fail("observable.seed", "must fit in 64 bits")
    eps = ob["epsilon"]
    if isinstance(eps, (int, float)):
        eps = [eps]
    if not eps or any(isinstance(e, bool) or not isinstance(e, (int, float)) or e <= 0
                      for e in eps):
        fail("observable.epsilon", "expected a nonempty list of positive numbers")
    phi = float(num("observable", "phi_srb", 0))
    decay = float(num("observable", "decay_ratio", 0))
    hs = num("observable", "holdout_samples", 0, integer=True)
    hseed = ob["holdout_seed"]
    if hseed is not None:
        hseed = num("observable", "holdout_seed", 0, strict=False, integer=True)
        if hseed == seed:
            fail("observable.holdout_seed", "must differ from observable.seed")
    cov_eps = float(num("observable", "coverage_epsilon", 0))

    emp = m["empiric"]
    x0 = emp["x0"]
    if x0 is not None:
        if isinstance(x0, (int, float)):
            x0 = [x0]
        if len(x0) != dim:
            fail("empiric.x0", f"needs {dim} coordinates")
        x0 = tuple(float(v) for v in x0)
    ref = emp["reference"]
    if ref not in ("final", "uniform", "none"):
        fail("empiric.reference", "expected 'final', 'uniform' or 'none'")

    ends = []
    for key in ("a", "b"):
        v = m["endpoints"][key]
        if v is not None:
            if len(v) != dim:
                fail(f"endpoints.{key}", f"needs {dim} coordinates")
            v = tuple(float(t) for t in v)
        ends.append(v)
    if (ends[0] is None) != (ends[1] is None):
        fail("endpoints", "set both a and b, or neither")

    run = m["run"]
    threads = run["threads"]
    if threads is not None:
        threads = num("run", "threads", 0, integer=True)

    return ExperimentConfig(
        system=name, params=params, resolution=tuple(res), truncation=trunc,
        n0=n0, gamma=gamma, horizon=horizon, burn_in=burn,
        delta_cluster=dc, delta_conv=dv, tail_fraction=tf,
        samples=samples, seed=seed, epsilon=tuple(float(e) for e in eps),
        phi_srb=phi, decay_ratio=decay, holdout_samples=hs, holdout_seed=hseed,
        coverage_epsilon=cov_eps, x0=x0, reference=ref,
        dump_measures=bool(emp["dump_measures"]),
        endpoint_a=ends[0], endpoint_b=ends[1],
        threads=threads, output=run["output"], wall_time=bool(run["wall_time"]),
    )


def config_fields() -> list[str]:
    return [f.name for f in fields(ExperimentConfig)]
