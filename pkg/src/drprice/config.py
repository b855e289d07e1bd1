"""Experiment configuration: parsing, defaults and validation.

Configs are nested JSON objects.  Every validation failure raises
:class:`ConfigError` naming the offending field path, and nothing reaches
the simulator until the whole tree validates.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .policies import PolicySpec

# fields that change how a run executes but never what it outputs
EXECUTION_FIELDS = ("output_dir", "workers")


@dataclass
class MarketConfig:
    theta: float | None = None          # $/kWh^2; None = calibrate to mean base demand
    utility_weight: float = 1.0         # Q = utility_weight * 2 theta I
    levels: int = 1                     # |D| for mode "levels"
    mode: str = "levels"                # "levels" or "raw"
    price_trace: str | None = None
    price_days: int = 30
    price_profile: dict = field(default_factory=dict)


@dataclass
class ConsumerConfig:
    alpha: float = 0.5
    beta: float = 1.0
    kappa: float = 10.0
    x0: float = 18.0
    x_des: float = 18.0
    population: int = 100
    alpha_jitter: float = 0.0
    beta_jitter: float = 0.0
    process_noise_std: float = 1.0      # degC
    demand_noise_ratio: float | None = None
    temperature_trace: str | None = None
    temperature_days: int = 30
    temperature_profile: dict = field(default_factory=dict)
    cov_samples: int = 4000


@dataclass
class DemandConfig:
    source: str = "consumer"            # "consumer" | "file" | "inline"
    path: str | None = None
    A: list | None = None
    b: list | None = None
    sigma: float | None = None
    sigma_w: list | None = None


@dataclass
class MarkovConfig:
    transition_prob: float = 0.25
    scale: float = 1.5


@dataclass
class ExperimentConfig:
    scenario: str = "static"
    horizon_days: int = 30
    num_runs: int = 500
    master_seed: int = 0
    workers: int = 1
    output_dir: str = "out"
    market: MarketConfig = field(default_factory=MarketConfig)
    consumer: ConsumerConfig = field(default_factory=ConsumerConfig)
    demand: DemandConfig = field(default_factory=DemandConfig)
    markov: MarkovConfig = field(default_factory=MarkovConfig)
    dispatch: list | None = None
    policies: list = field(default_factory=lambda: [PolicySpec("pwlsa"), PolicySpec("greedy")])

    def to_dict(self, execution=True):
        d = asdict(self)
        if not execution:
            for k in EXECUTION_FIELDS:
                d.pop(k)
        return d

    def canonical_json(self):
        """Sorted, compact JSON of everything that determines the outputs."""
        return json.dumps(self.to_dict(execution=False), sort_keys=True, separators=(",", ":"))

    def content_hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


_SECTIONS = {"market": MarketConfig, "consumer": ConsumerConfig, "demand": DemandConfig,
             "markov": MarkovConfig}


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {type(data).__name__}")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{path + '.' if path else ''}{unknown[0]}: unknown field")
    kwargs = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        key = f"{path}.{f.name}" if path else f.name
        value = data[f.name]
        if f.name in _SECTIONS and cls is ExperimentConfig:
            value = _build(_SECTIONS[f.name], value, key)
        elif f.name == "policies" and cls is ExperimentConfig:
            value = _policies(value, key)
        kwargs[f.name] = value
    return cls(**kwargs)


def _policies(value, path):
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{path}: expected a non-empty list")
    out = []
    names = {f.name for f in fields(PolicySpec)}
    for i, item in enumerate(value):
        key = f"{path}[{i}]"
        if isinstance(item, str):
            item = {"kind": item}
        if not isinstance(item, dict):
            raise ConfigError(f"{key}: expected a policy name or object")
        bad = sorted(set(item) - names)
        if bad:
            raise ConfigError(f"{key}.{bad[0]}: unknown field")
        if item.get("kind") not in PolicySpec.KINDS:
            raise ConfigError(f"{key}.kind: must be one of {', '.join(PolicySpec.KINDS)}")
        out.append(PolicySpec(**item))
    labels = [p.label for p in out]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"{path}: policy labels must be unique, got {labels}")
    return out


def _num(value, path, lo=None, hi=None, integer=False, lo_open=False, allow_none=False):
    if value is None and allow_none:
        return
    ok_type = isinstance(value, int) if integer else isinstance(value, (int, float))
    if isinstance(value, bool) or not ok_type:
        raise ConfigError(f"{path}: expected {'an integer' if integer else 'a number'}, got {value!r}")
    if lo is not None and (value <= lo if lo_open else value < lo):
        raise ConfigError(f"{path}: must be {'>' if lo_open else '>='} {lo}, got {value}")
    if hi is not None and value > hi:
        raise ConfigError(f"{path}: must be <= {hi}, got {value}")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.scenario not in ("static", "markov"):
        raise ConfigError(f"scenario: must be 'static' or 'markov', got {cfg.scenario!r}")
    _num(cfg.horizon_days, "horizon_days", 1, integer=True)
    _num(cfg.num_runs, "num_runs", 1, integer=True)
    _num(cfg.master_seed, "master_seed", 0, integer=True)
    _num(cfg.workers, "workers", 1, integer=True)
    if not isinstance(cfg.output_dir, str) or not cfg.output_dir:
        raise ConfigError("output_dir: expected a non-empty path")

    m = cfg.market
    _num(m.theta, "market.theta", 0, lo_open=True, allow_none=True)
    _num(m.utility_weight, "market.utility_weight", 0)
    _num(m.levels, "market.levels", 1, integer=True)
    _num(m.price_days, "market.price_days", 1, integer=True)
    if m.mode not in ("levels", "raw"):
        raise ConfigError(f"market.mode: must be 'levels' or 'raw', got {m.mode!r}")
    if not isinstance(m.price_profile, dict):
        raise ConfigError("market.price_profile: expected an object")

    c = cfg.consumer
    _num(c.alpha, "consumer.alpha", 0, 1, lo_open=True)
    if c.alpha >= 1:
        raise ConfigError(f"consumer.alpha: must be < 1, got {c.alpha}")
    _num(c.beta, "consumer.beta", 0, lo_open=True)
    _num(c.kappa, "consumer.kappa", 0, lo_open=True)
    _num(c.x0, "consumer.x0")
    _num(c.x_des, "consumer.x_des")
    _num(c.population, "consumer.population", 1, integer=True)
    _num(c.alpha_jitter, "consumer.alpha_jitter", 0, 0.99)
    _num(c.beta_jitter, "consumer.beta_jitter", 0, 0.99)
    _num(c.process_noise_std, "consumer.process_noise_std", 0)
    _num(c.demand_noise_ratio, "consumer.demand_noise_ratio", 0, lo_open=True, allow_none=True)
    _num(c.temperature_days, "consumer.temperature_days", 1, integer=True)
    _num(c.cov_samples, "consumer.cov_samples", 2, integer=True)
    if not isinstance(c.temperature_profile, dict):
        raise ConfigError("consumer.temperature_profile: expected an object")

    d = cfg.demand
    sources = {"consumer": (), "file": ("path",), "inline": ("A", "b")}
    if d.source not in sources:
        raise ConfigError(f"demand.source: must be one of {', '.join(sources)}, got {d.source!r}")
    for k in sources[d.source]:
        if getattr(d, k) is None:
            raise ConfigError(f"demand.{k}: required when demand.source is {d.source!r}")
    stray = [k for k in ("path", "A", "b", "sigma", "sigma_w")
             if getattr(d, k) is not None and k not in sources[d.source] + (("sigma", "sigma_w")
                                                                           if d.source == "inline" else ())]
    if stray:
        raise ConfigError(f"demand.{stray[0]}: not allowed with demand.source {d.source!r} "
                          "(exactly one demand source)")
    if d.source == "inline" and d.sigma is not None and d.sigma_w is not None:
        raise ConfigError("demand.sigma_w: give either sigma or sigma_w, not both")
    _num(d.sigma, "demand.sigma", 0, allow_none=True)

    k = cfg.markov
    _num(k.transition_prob, "markov.transition_prob", 0, 1)
    _num(k.scale, "markov.scale", 0, lo_open=True)

    if cfg.dispatch is not None:
        if not isinstance(cfg.dispatch, list) or not cfg.dispatch:
            raise ConfigError("dispatch: expected a non-empty list of vectors")
        for i, row in enumerate(cfg.dispatch):
            if not isinstance(row, list) or not all(isinstance(v, (int, float)) for v in row):
                raise ConfigError(f"dispatch[{i}]: expected a list of numbers")
        if len({len(r) for r in cfg.dispatch}) != 1:
            raise ConfigError("dispatch: all vectors must have the same length")

    for i, p in enumerate(cfg.policies):
        key = f"policies[{i}]"
        _num(p.gamma, f"{key}.gamma", 0, lo_open=True, allow_none=True)
        _num(p.gamma_factor, f"{key}.gamma_factor", 0, lo_open=True)
        _num(p.initial_price, f"{key}.initial_price")
        _num(p.ridge, f"{key}.ridge", 0)
        _num(p.explore_std, f"{key}.explore_std", 0)
        _num(p.cond_threshold, f"{key}.cond_threshold", 1, lo_open=True)
        _num(p.key_decimals, f"{key}.key_decimals", 0, integer=True)
        if not isinstance(p.guard, bool):
            raise ConfigError(f"{key}.guard: expected true or false")
    return cfg


def from_dict(data: dict) -> ExperimentConfig:
    return validate(_build(ExperimentConfig, copy.deepcopy(data), ""))


def load_config(path) -> dict:
    """Read a JSON config file into a plain dict (merged with flags by the CLI)."""
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be an object")
    return data


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out
