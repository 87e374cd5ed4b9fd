"""Run configuration: a single JSON document plus dotted ``--set`` overrides."""
from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field as dc_field

from .distance import DistanceKind
from .errors import ConfigError, InvalidArgument
from .grid import Grid
from .metric import DEFAULT_CONDITION_CAP, DEFAULT_PAIR_BUDGET, PRESETS, MetricField, metric_from_spec
from .net import StopRule

MIN_RES = 8

DEFAULTS = {
    "seed": 0,
    "seed_site": None,
    "output": "out",
    "safety_factor": 1.10,
    "condition_cap": DEFAULT_CONDITION_CAP,
    "sigma": {"coarse_res": None, "refine_rounds": 4, "pair_budget": DEFAULT_PAIR_BUDGET},
    "samples": {"star_per_cell": 4, "phi": 1024, "witnesses_per_pair": 3},
}

STOP_KEYS = ("target_epsilon", "target_eps_sigma", "max_sites", "orphan_free", "min_sites",
             "check_every")


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class RunConfig:
    box_min: list
    box_max: list
    res: list
    metric: dict
    kind: DistanceKind
    stop: dict
    seed: int = 0
    seed_site: list | None = None
    output: str = "out"
    safety_factor: float = 1.10
    condition_cap: float = DEFAULT_CONDITION_CAP
    sigma: dict = dc_field(default_factory=dict)
    samples: dict = dc_field(default_factory=dict)
    base_dir: str | None = dc_field(default=None, compare=False)

    @property
    def dim(self) -> int:
        return len(self.res)

    @property
    def grid(self) -> Grid:
        return Grid(tuple(self.box_min), tuple(self.box_max), tuple(self.res))

    def field(self) -> MetricField:
        spec = dict(self.metric)
        spec.setdefault("condition_cap", self.condition_cap)
        try:
            return metric_from_spec(spec, self.dim, self.base_dir)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad metric parameters: {exc}", "metric") from None
        except FileNotFoundError as exc:
            raise ConfigError(f"metric file not found: {exc.filename}", "metric.pl_grid") from None

    def stop_rule(self, sigma_hat: float | None = None) -> StopRule:
        """Turn the stop section into a StopRule; ``target_eps_sigma`` needs sigma."""
        from .verify import threshold_for

        st = self.stop
        target = st.get("target_epsilon")
        es = st.get("target_eps_sigma")
        if es is not None:
            es = threshold_for(self.kind) if es == "threshold" else float(es)
            if sigma_hat is None:
                raise ConfigError("target_eps_sigma needs a sigma estimate", "stop.target_eps_sigma")
            if sigma_hat > 0:
                t = es / sigma_hat
                target = t if target is None else min(target, t)
        kw = {"target_epsilon": target, "max_sites": st.get("max_sites"),
              "orphan_free": bool(st.get("orphan_free", False)), "min_sites": st.get("min_sites"),
              "check_every": int(st.get("check_every", 8))}
        if es is not None and target is None and kw["max_sites"] is None and kw["min_sites"] is None \
                and not kw["orphan_free"]:
            # constant metric: any net is below threshold; fall back to a site count
            kw["min_sites"] = 1
        try:
            return StopRule(**kw)
        except InvalidArgument as exc:
            raise ConfigError(str(exc), "stop") from None

    def needs_sigma(self) -> bool:
        return self.stop.get("target_eps_sigma") is not None

    def to_dict(self) -> dict:
        return {
            "domain": {"min": list(self.box_min), "max": list(self.box_max)},
            "grid": list(self.res),
            "metric": copy.deepcopy(self.metric),
            "kind": self.kind.value,
            "stop": copy.deepcopy(self.stop),
            "seed": self.seed,
            "seed_site": self.seed_site,
            "output": self.output,
            "safety_factor": self.safety_factor,
            "condition_cap": self.condition_cap,
            "sigma": copy.deepcopy(self.sigma),
            "samples": copy.deepcopy(self.samples),
        }

    @classmethod
    def from_dict(cls, raw: dict, base_dir: str | None = None) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object", "<root>")
        for key in ("grid", "metric", "kind", "stop"):
            if key not in raw:
                raise ConfigError(f"missing required field {key!r}", key)
        d = _merge(DEFAULTS, raw)
        res = d["grid"]
        if isinstance(res, int):
            res = [res]
        if not isinstance(res, list) or not res or not all(isinstance(r, int) for r in res):
            raise ConfigError("grid must be a list of integers", "grid")
        if any(r < MIN_RES for r in res):
            raise ConfigError(f"grid resolution must be >= {MIN_RES} per axis", "grid")
        dim = len(res)
        dom = d.get("domain", {"min": [0.0] * dim, "max": [1.0] * dim})
        try:
            lo = [float(x) for x in dom["min"]]
            hi = [float(x) for x in dom["max"]]
        except (KeyError, TypeError, ValueError):
            raise ConfigError("domain needs numeric 'min' and 'max' lists", "domain") from None
        if len(lo) != dim or len(hi) != dim:
            raise ConfigError("domain and grid dimensions differ", "domain")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ConfigError("domain min must be below max on every axis", "domain")
        metric = d["metric"]
        if not isinstance(metric, dict) or not ({"preset", "pl_grid"} & set(metric)):
            raise ConfigError("metric needs a 'preset' or a 'pl_grid' path", "metric")
        if "preset" in metric and metric["preset"] not in PRESETS:
            raise ConfigError(f"unknown preset {metric['preset']!r}", "metric.preset")
        try:
            kind = DistanceKind.parse(d["kind"])
        except InvalidArgument as exc:
            raise ConfigError(str(exc), "kind") from None
        stop = d["stop"]
        if not isinstance(stop, dict):
            raise ConfigError("stop must be an object", "stop")
        unknown = set(stop) - set(STOP_KEYS)
        if unknown:
            raise ConfigError(f"unknown stop keys {sorted(unknown)}", "stop")
        if not any(stop.get(k) not in (None, False) for k in STOP_KEYS if k != "check_every"):
            raise ConfigError("stop needs at least one criterion", "stop")
        tes = stop.get("target_eps_sigma")
        if tes is not None and tes != "threshold" and not isinstance(tes, (int, float)):
            raise ConfigError("target_eps_sigma must be a number or 'threshold'",
                              "stop.target_eps_sigma")
        if not isinstance(d["seed"], int):
            raise ConfigError("seed must be an integer", "seed")
        if not float(d["safety_factor"]) >= 1.0:
            raise ConfigError("safety_factor must be >= 1", "safety_factor")
        return cls(lo, hi, list(res), metric, kind, stop, int(d["seed"]), d["seed_site"],
                   str(d["output"]), float(d["safety_factor"]), float(d["condition_cap"]),
                   d["sigma"], d["samples"], base_dir)


def parse_value(text: str):
    """JSON value if it parses, else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``path.to.field=value`` assignments to a raw config dict."""
    out = copy.deepcopy(raw)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value", item)
        path, value = item.split("=", 1)
        keys = path.strip().split(".")
        node = out
        for k in keys[:-1]:
            if not isinstance(node.get(k), dict):
                node[k] = {}
            node = node[k]
        node[keys[-1]] = parse_value(value)
    return out


def load_config(path, overrides=()) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", "<file>") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
                          f"line {exc.lineno}") from None
    raw = apply_overrides(raw, overrides)
    return RunConfig.from_dict(raw, os.path.dirname(os.path.abspath(path)))
