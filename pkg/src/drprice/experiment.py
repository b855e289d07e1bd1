"""Experiment orchestration: traces -> demand model -> dispatch -> ensembles -> files.

Bundle layout written to ``output_dir``::

    manifest.txt             flat key=value, enough to re-run byte-exactly
    model.txt                demand model used (state 0 under Markov switching)
    dispatch.csv             the day-ahead dispatch schedule
    <label>_trace.csv        ensemble-mean trace per policy
    <label>_summary.csv      mean / stderr / quantiles of cumulative regret
"""

from __future__ import annotations

import hashlib
import json
import logging
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, from_dict
from .consumer import ThermalTrace, extract_affine, homogeneous_population, jittered_population
from .demand import AffineDemandModel, MarkovModelProcess, dumps_model, isotropic, load_model
from .errors import ConfigError
from .market import QuadraticCost, QuadraticUtility, solve_opf
from .regret import EnsembleResult, EpisodeConfig, run_ensemble
from .traces import HOURS, SynthProfile, atomic_write_text, load_trace, synth_trace, daily_vectors

log = logging.getLogger(__name__)

# sub-seeds derived from the master seed: SeedSequence([master, tag])
SEED_POPULATION, SEED_TEMPERATURE, SEED_PRICE, SEED_NOISE_COV = 1, 2, 3, 4

TRACE_COLUMNS = ("day", "regret_kwh2", "cum_regret_kwh2", "price_dev_rel", "flag_count")
SUMMARY_COLUMNS = ("day", "cum_regret_mean_kwh2", "cum_regret_stderr_kwh2", "cum_regret_q05_kwh2",
                   "cum_regret_q50_kwh2", "cum_regret_q95_kwh2", "cum_regret_norm_mean_1")


@dataclass
class Setup:
    """Everything an experiment simulates with, built from the config."""

    model: AffineDemandModel
    process: MarkovModelProcess | None
    dispatch: np.ndarray
    temperature: np.ndarray | None = None
    wholesale_price: np.ndarray | None = None
    theta: float | None = None


@dataclass
class Bundle:
    path: Path
    config: ExperimentConfig
    setup: Setup
    results: dict = field(default_factory=dict)
    files: list = field(default_factory=list)


def _sub_seed(cfg, tag):
    return [cfg.master_seed, tag]


def temperature_days(cfg: ExperimentConfig) -> np.ndarray:
    c = cfg.consumer
    if c.temperature_trace:
        return load_trace(c.temperature_trace, "temperature")
    profile = SynthProfile.for_kind("temperature", **c.temperature_profile)
    return daily_vectors(synth_trace(c.temperature_days, profile, _sub_seed(cfg, SEED_TEMPERATURE)))


def price_days(cfg: ExperimentConfig) -> np.ndarray:
    m = cfg.market
    if m.price_trace:
        return load_trace(m.price_trace, "price")
    profile = SynthProfile.for_kind("price", **m.price_profile)
    return daily_vectors(synth_trace(m.price_days, profile, _sub_seed(cfg, SEED_PRICE)))


def build_population(cfg: ExperimentConfig, H=HOURS):
    c = cfg.consumer
    kw = dict(alpha=c.alpha, beta=c.beta, kappa=c.kappa, x0=c.x0, x_des=c.x_des, H=H)
    if c.alpha_jitter or c.beta_jitter:
        rng = np.random.default_rng(_sub_seed(cfg, SEED_POPULATION))
        return jittered_population(c.population, rng, alpha_jitter=c.alpha_jitter,
                                   beta_jitter=c.beta_jitter, **kw)
    return homogeneous_population(c.population, **kw)


def consumer_model(cfg: ExperimentConfig, outdoor: np.ndarray) -> AffineDemandModel:
    """Extract the affine model of the configured population for one outdoor profile.

    With ``demand_noise_ratio`` set, the process noise std is chosen so that
    the rms demand noise ``sqrt(tr(Sigma_w) / H)`` equals that fraction of
    the mean base demand (the noise covariance scales with the std squared).
    """
    c = cfg.consumer
    pop = build_population(cfg, outdoor.size)
    # demand noise is linear in the process noise, so one unit-std sample
    # set serves every std: Sigma_w(std) = std^2 Sigma_w(1) with the same draws
    unit = extract_affine(pop, ThermalTrace(outdoor, 1.0), c.cov_samples, _sub_seed(cfg, SEED_NOISE_COV))
    std = c.process_noise_std
    if c.demand_noise_ratio is not None:
        rms = np.sqrt(unit.noise_trace / outdoor.size)
        if rms == 0:
            raise ConfigError("consumer.demand_noise_ratio: population produces no demand noise")
        std = c.demand_noise_ratio * float(np.mean(unit.b)) / rms
    return AffineDemandModel(A=unit.A, b=unit.b, sigma_w=std**2 * unit.sigma_w)


def demand_model(cfg: ExperimentConfig, outdoor=None) -> AffineDemandModel:
    d = cfg.demand
    if d.source == "file":
        return load_model(d.path)
    if d.source == "inline":
        b = np.atleast_1d(np.asarray(d.b, dtype=float))
        A = np.asarray(d.A, dtype=float).reshape(b.size, b.size)
        if d.sigma_w is not None:
            return AffineDemandModel(A=A, b=b, sigma_w=d.sigma_w)
        return isotropic(A, b, d.sigma or 0.0)
    if outdoor is None:
        outdoor = temperature_days(cfg).mean(axis=0)
    return consumer_model(cfg, outdoor)


def dispatch_schedule(cfg: ExperimentConfig, model: AffineDemandModel, prices=None):
    """Day-ahead dispatch, one row per trace day.

    Day ``t`` clears the OPF between the generation cost ``theta p.p`` and
    a retailer utility whose marginal value is the day's wholesale price
    ``lambda_t`` at the base demand ``b`` and falls with slope
    ``Q = w 2 theta I`` (``w = market.utility_weight``)::

        eta_t = lambda_t + Q b   =>   d_da = (w b + lambda_t / (2 theta)) / (1 + w)

    ``theta`` defaults to ``mean(lambda) / (2 mean(b))`` so both terms share
    a scale.  In ``levels`` mode days are grouped by mean price into
    ``market.levels`` quantile groups and each day gets its group's mean
    dispatch, giving a finite set of dispatch levels.
    """
    if cfg.dispatch is not None:
        sched = np.asarray(cfg.dispatch, dtype=float)
        if sched.shape[1] != model.horizon:
            raise ConfigError(f"dispatch: vectors have length {sched.shape[1]}, model horizon is {model.horizon}")
        return sched, None
    m = cfg.market
    if prices is None:
        prices = price_days(cfg)
    if model.horizon != prices.shape[1]:
        raise ConfigError(f"market: price trace has {prices.shape[1]} hours/day, model has {model.horizon}")
    theta = m.theta if m.theta is not None else float(prices.mean() / (2.0 * model.b.mean()))
    cost = QuadraticCost(theta)
    Q = m.utility_weight * 2.0 * theta * np.eye(model.horizon)
    raw = np.array([solve_opf(QuadraticUtility(lam + Q @ model.b, Q), cost).d_da for lam in prices])
    if m.mode == "raw":
        return raw, theta
    k = min(m.levels, len(raw))
    order = np.argsort(prices.mean(axis=1), kind="stable")
    sched = np.empty_like(raw)
    for g in np.array_split(order, k):
        sched[g] = raw[g].mean(axis=0)
    return sched, theta


def build_setup(cfg: ExperimentConfig) -> Setup:
    temps = None
    if cfg.demand.source == "consumer":
        temps = temperature_days(cfg)
    model = demand_model(cfg, None if temps is None else temps.mean(axis=0))
    prices = None if cfg.dispatch is not None else price_days(cfg)
    sched, theta = dispatch_schedule(cfg, model, prices)
    process = None
    if cfg.scenario == "markov":
        process = MarkovModelProcess([model, model.scaled(cfg.markov.scale)], cfg.markov.transition_prob)
    return Setup(model, process, sched, temps, prices, theta)


def episode_config(cfg: ExperimentConfig, setup: Setup, spec) -> EpisodeConfig:
    return EpisodeConfig(
        horizon_days=cfg.horizon_days,
        dispatch_schedule=setup.dispatch,
        model=setup.process if setup.process is not None else setup.model,
        policy_spec=spec,
        seed=cfg.master_seed,
    )


def _fmt(v):
    return repr(float(v)) if np.isfinite(v) else "nan"


def trace_csv(ens: EnsembleResult) -> str:
    mt = ens.mean_trace()
    lines = [",".join(TRACE_COLUMNS)]
    for t in range(ens.horizon):
        lines.append(f"{t + 1},{_fmt(mt.per_day[t])},{_fmt(mt.cumulative[t])},"
                     f"{_fmt(mt.price_deviation[t])},{int(mt.flags[t])}")
    return "\n".join(lines) + "\n"


def summary_csv(ens: EnsembleResult, noise_trace: float) -> str:
    mean, se = ens.mean(), ens.stderr()
    q = ens.quantiles()
    norm = mean / noise_trace if noise_trace > 0 else np.full_like(mean, np.nan)
    lines = [",".join(SUMMARY_COLUMNS)]
    for t in range(ens.horizon):
        lines.append(",".join([str(t + 1), *(_fmt(v) for v in (mean[t], se[t], q[0, t], q[1, t], q[2, t], norm[t]))]))
    return "\n".join(lines) + "\n"


def dispatch_csv(sched: np.ndarray) -> str:
    head = "day," + ",".join(f"h{h:02d}_kwh" for h in range(sched.shape[1]))
    return head + "\n" + "".join(f"{i}," + ",".join(repr(float(v)) for v in row) + "\n"
                                 for i, row in enumerate(sched))


def _file_sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def manifest_text(cfg: ExperimentConfig) -> str:
    items = [
        ("package", "drprice"),
        ("package_version", __version__),
        ("numpy_version", np.__version__),
        ("python_version", platform.python_version()),
        ("master_seed", str(cfg.master_seed)),
        ("config_sha256", cfg.content_hash()),
    ]
    for key, p in (("consumer.temperature_trace", cfg.consumer.temperature_trace),
                   ("market.price_trace", cfg.market.price_trace),
                   ("demand.path", cfg.demand.path if cfg.demand.source == "file" else None)):
        if p:
            items.append((f"input_sha256.{key}", _file_sha(p)))
    items.append(("config_json", cfg.canonical_json()))
    return "".join(f"{k}={v}\n" for k, v in items)


def parse_manifest(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if line.strip():
            k, sep, v = line.partition("=")
            if not sep:
                raise ConfigError(f"manifest: malformed line {line!r}")
            out[k] = v
    return out


def config_from_manifest(path, output_dir=None, workers=1) -> ExperimentConfig:
    """Rebuild the config recorded in a manifest, checking its hash and inputs."""
    meta = parse_manifest(Path(path).read_text())
    if "config_json" not in meta:
        raise ConfigError("manifest: no config_json entry")
    data = json.loads(meta["config_json"])
    data["output_dir"] = output_dir or str(Path(path).parent)
    data["workers"] = workers
    cfg = from_dict(data)
    if cfg.content_hash() != meta.get("config_sha256"):
        raise ConfigError("manifest: config hash mismatch")
    for k, v in meta.items():
        if k.startswith("input_sha256."):
            field_path = k[len("input_sha256."):]
            section, name = field_path.split(".")
            p = getattr(getattr(cfg, section), name)
            if _file_sha(p) != v:
                raise ConfigError(f"{field_path}: input file {p} changed since the manifest was written")
    return cfg


def run_experiment(cfg: ExperimentConfig) -> Bundle:
    setup = build_setup(cfg)
    out = Path(cfg.output_dir)
    bundle = Bundle(out, cfg, setup)

    def emit(name, text):
        atomic_write_text(out / name, text)
        bundle.files.append(name)

    emit("model.txt", dumps_model(setup.model))
    emit("dispatch.csv", dispatch_csv(setup.dispatch))
    for spec in cfg.policies:
        log.info("running %s: %d runs x %d days", spec.label, cfg.num_runs, cfg.horizon_days)
        ens = run_ensemble(episode_config(cfg, setup, spec), cfg.num_runs, workers=cfg.workers)
        bundle.results[spec.label] = ens
        emit(f"{spec.label}_trace.csv", trace_csv(ens))
        emit(f"{spec.label}_summary.csv", summary_csv(ens, setup.model.noise_trace))
    emit("manifest.txt", manifest_text(cfg))
    return bundle
