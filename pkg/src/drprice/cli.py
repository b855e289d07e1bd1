"""Command line: ``drprice {simulate,extract-demand,synth-trace,report}``.

Flags mirror the config fields; when ``--config`` is also given, values in
the file win over the flags.  Exit codes: 0 success, 2 configuration or
usage error, 3 bad input data (trace or model files), 4 simulation failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .config import deep_merge, from_dict, load_config
from .consumer import min_sym_eig
from .demand import save_model
from .errors import ConfigError, DataFileError, DrPriceError, InputError, SimulationError
from .experiment import (
    config_from_manifest, consumer_model, run_experiment, temperature_days,
)
from .policies import PolicySpec
from .traces import SynthProfile, synth_trace, write_trace

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SIM = 0, 2, 3, 4

log = logging.getLogger("drprice")


def _set(d, dotted, value):
    if value is None:
        return
    *head, last = dotted.split(".")
    for k in head:
        d = d.setdefault(k, {})
    d[last] = value


# (flag, config path, type, help)
SIM_FLAGS = [
    ("--scenario", "scenario", str, "static or markov"),
    ("--horizon-days", "horizon_days", int, "days simulated after the start-up day"),
    ("--num-runs", "num_runs", int, "Monte Carlo runs per policy"),
    ("--master-seed", "master_seed", int, None),
    ("--workers", "workers", int, "worker processes (outputs do not depend on it)"),
    ("--output-dir", "output_dir", str, None),
    ("--levels", "market.levels", int, "number of day-ahead dispatch levels"),
    ("--dispatch-mode", "market.mode", str, "levels or raw"),
    ("--theta", "market.theta", float, "generation cost curvature [$/kWh^2]"),
    ("--price-trace", "market.price_trace", str, "wholesale price CSV"),
    ("--temperature-trace", "consumer.temperature_trace", str, "outdoor temperature CSV"),
    ("--population", "consumer.population", int, None),
    ("--kappa", "consumer.kappa", float, "comfort weight [$/degC^2]"),
    ("--process-noise-std", "consumer.process_noise_std", float, "[degC]"),
    ("--demand-noise-ratio", "consumer.demand_noise_ratio", float,
     "rms demand noise as a fraction of mean base demand"),
    ("--model", "demand.path", str, "load the demand model from a model file"),
    ("--transition-prob", "markov.transition_prob", float, None),
]


def _add_sim_flags(p):
    for flag, _, typ, hlp in SIM_FLAGS:
        p.add_argument(flag, type=typ, default=None, help=hlp)


def _flag_dict(args):
    d = {}
    for flag, path, _, _ in SIM_FLAGS:
        _set(d, path, getattr(args, flag[2:].replace("-", "_")))
    if args.model:
        d["demand"]["source"] = "file"
    if args.policy:
        d["policies"] = [{"kind": k} for k in args.policy]
    return d


def cmd_simulate(args):
    if args.manifest:
        cfg = config_from_manifest(args.manifest, args.output_dir, args.workers or 1)
    else:
        data = _flag_dict(args)
        if args.config:
            data = deep_merge(data, load_config(args.config))
        cfg = from_dict(data)
    bundle = run_experiment(cfg)
    for name in bundle.files:
        print(bundle.path / name)
    if args.report:
        from .report import report
        sys.stdout.write(report(bundle.path))
    return EXIT_OK


def cmd_extract(args):
    data = _flag_dict(args)
    if args.config:
        data = deep_merge(data, load_config(args.config))
    cfg = from_dict(data)
    if cfg.demand.source != "consumer":
        raise ConfigError("demand.source: extract-demand needs the consumer source")
    model = consumer_model(cfg, temperature_days(cfg).mean(axis=0))
    save_model(model, args.out)
    print(f"horizon,{model.horizon}")
    print(f"min_eig_A_kwh_per_usd_per_kwh,{min_sym_eig(model.A)!r}")
    print(f"mean_b_kwh,{float(np.mean(model.b))!r}")
    print(f"noise_trace_kwh2,{model.noise_trace!r}")
    return EXIT_OK


def cmd_synth(args):
    overrides = {k: getattr(args, k) for k in ("mean", "amplitude", "peak_hour", "jitter", "start", "unit")
                 if getattr(args, k) is not None}
    trace = synth_trace(args.days, SynthProfile.for_kind(args.kind, **overrides), args.seed)
    write_trace(trace, args.out)
    print(args.out)
    return EXIT_OK


def cmd_report(args):
    from .report import report
    sys.stdout.write(report(args.bundle, figures=not args.no_figures))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="drprice", description="Dynamic retail pricing regret lab.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run an experiment and write a bundle")
    s.add_argument("--config", help="JSON config; its values override flags")
    s.add_argument("--manifest", help="re-run exactly what a manifest.txt recorded")
    s.add_argument("--policy", action="append", choices=PolicySpec.KINDS,
                   help="repeat for several policies (default: pwlsa and greedy)")
    s.add_argument("--report", action="store_true", help="also write the report tables and figures")
    _add_sim_flags(s)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("extract-demand", help="fit the affine demand model of a consumer population")
    e.add_argument("--config")
    e.add_argument("--out", required=True)
    e.add_argument("--policy", action="append", help=argparse.SUPPRESS)
    _add_sim_flags(e)
    e.set_defaults(func=cmd_extract)

    t = sub.add_parser("synth-trace", help="write a synthetic hourly trace CSV")
    t.add_argument("--kind", choices=("temperature", "price"), default="temperature")
    t.add_argument("--days", type=int, default=30)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--mean", type=float)
    t.add_argument("--amplitude", type=float)
    t.add_argument("--peak-hour", type=float)
    t.add_argument("--jitter", type=float)
    t.add_argument("--start", help="first day, YYYY-MM-DD")
    t.add_argument("--unit", help="degC, usd_per_mwh or usd_per_kwh")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_synth)

    r = sub.add_parser("report", help="summarize a bundle: fit tables and figures")
    r.add_argument("bundle")
    r.add_argument("--no-figures", action="store_true")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InputError) as exc:
        print(f"drprice: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataFileError as exc:
        print(f"drprice: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SimulationError as exc:
        print(f"drprice: simulation error: {exc}", file=sys.stderr)
        return EXIT_SIM
    except DrPriceError as exc:
        print(f"drprice: error: {exc}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
