"""Summaries of a simulate bundle: fits, price-deviation tables, flag counts, figures.

Reads only the files a bundle holds (``manifest.txt``, ``model.txt`` and
the per-policy CSVs), so a report can be regenerated anywhere the bundle is
copied.  Outputs::

    report_fits.csv              one row per policy: log fit, slopes, flags
    report_price_deviation.csv   mean relative price deviation at checkpoint days
    cumulative_regret.png        mean cumulative regret with the 5-95% band
    price_deviation.png          mean relative price deviation, log scale
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .demand import load_model
from .errors import ConfigError
from .experiment import parse_manifest
from .regret import linear_slope, log_fit
from .traces import atomic_write_text

FIT_COLUMNS = ("policy", "days", "final_cum_regret_kwh2", "final_cum_regret_norm_1",
               "log_slope_kwh2", "log_intercept_kwh2", "log_r2_1", "log_slope_norm_1",
               "second_half_slope_kwh2_per_day", "third_quarter_slope_kwh2_per_day",
               "final_price_dev_rel", "flagged_days", "first_flagged_day")


@dataclass
class PolicyCurves:
    label: str
    days: np.ndarray
    cumulative: np.ndarray
    q05: np.ndarray
    q95: np.ndarray
    price_deviation: np.ndarray
    flags: np.ndarray


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"{path}: empty table")
    return rows


def _column(rows, name, dtype=float):
    return np.array([dtype(r[name]) for r in rows])


def bundle_labels(path) -> list[str]:
    """Policy labels in config order when a manifest exists, else sorted by file name."""
    path = Path(path)
    manifest = path / "manifest.txt"
    if manifest.exists():
        meta = parse_manifest(manifest.read_text())
        cfg = json.loads(meta["config_json"])
        labels = [p.get("label") or p["kind"] for p in cfg["policies"]]
        return [lab for lab in labels if (path / f"{lab}_trace.csv").exists()]
    return sorted(p.name[:-len("_trace.csv")] for p in path.glob("*_trace.csv"))


def load_curves(path, label) -> PolicyCurves:
    path = Path(path)
    trace = _read_csv(path / f"{label}_trace.csv")
    summary = _read_csv(path / f"{label}_summary.csv")
    return PolicyCurves(
        label=label,
        days=_column(trace, "day", int),
        cumulative=_column(trace, "cum_regret_kwh2"),
        q05=_column(summary, "cum_regret_q05_kwh2"),
        q95=_column(summary, "cum_regret_q95_kwh2"),
        price_deviation=_column(trace, "price_dev_rel"),
        flags=_column(trace, "flag_count", int),
    )


def fit_row(c: PolicyCurves, noise_trace: float) -> dict:
    T = c.days.size
    slope, icpt, r2 = log_fit(c.cumulative, c.days)
    norm = noise_trace if noise_trace > 0 else float("nan")
    # the slope windows need two points each
    s2 = linear_slope(c.cumulative, T // 2, T) if T >= 4 else float("nan")
    s3 = linear_slope(c.cumulative, T // 2, 3 * T // 4) if T >= 8 else float("nan")
    flagged = np.flatnonzero(c.flags)
    return {
        "policy": c.label,
        "days": T,
        "final_cum_regret_kwh2": c.cumulative[-1],
        "final_cum_regret_norm_1": c.cumulative[-1] / norm,
        "log_slope_kwh2": slope,
        "log_intercept_kwh2": icpt,
        "log_r2_1": r2,
        "log_slope_norm_1": slope / norm,
        "second_half_slope_kwh2_per_day": s2,
        "third_quarter_slope_kwh2_per_day": s3,
        "final_price_dev_rel": c.price_deviation[-1],
        "flagged_days": int(c.flags.sum()),
        "first_flagged_day": int(c.days[flagged[0]]) if flagged.size else "",
    }


def checkpoint_days(T):
    """1, 2, 5, 10, 20, 50, ... up to ``T``, always ending with ``T``."""
    out, base = [], 1
    while base <= T:
        out += [d for d in (base, 2 * base, 5 * base) if d <= T]
        base *= 10
    if out[-1] != T:
        out.append(T)
    return sorted(set(out))


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if np.isfinite(v) else "nan"
    return str(v)


def _table(columns, rows):
    lines = [",".join(columns)]
    lines += [",".join(_cell(r[c]) for c in columns) for r in rows]
    return "\n".join(lines) + "\n"


def deviation_table(curves: list[PolicyCurves]) -> str:
    T = min(c.days.size for c in curves)
    cols = ["day"] + [f"{c.label}_price_dev_rel" for c in curves]
    rows = []
    for d in checkpoint_days(T):
        row = {"day": d}
        row.update({f"{c.label}_price_dev_rel": c.price_deviation[d - 1] for c in curves})
        rows.append(row)
    return _table(cols, rows)


def report(path, figures: bool = True) -> str:
    """Write the report files into the bundle directory; return the fits table."""
    path = Path(path)
    if not path.is_dir():
        raise ConfigError(f"report: bundle directory {path} does not exist")
    labels = bundle_labels(path)
    if not labels:
        raise ConfigError(f"report: no policy traces in {path}")
    noise_trace = load_model(path / "model.txt").noise_trace if (path / "model.txt").exists() else 0.0
    curves = [load_curves(path, lab) for lab in labels]
    fits = _table(FIT_COLUMNS, [fit_row(c, noise_trace) for c in curves])
    atomic_write_text(path / "report_fits.csv", fits)
    atomic_write_text(path / "report_price_deviation.csv", deviation_table(curves))
    if figures:
        from .plotting import cumulative_regret_figure, price_deviation_figure
        cumulative_regret_figure({c.label: (c.days, c.cumulative, c.q05, c.q95) for c in curves},
                                 path / "cumulative_regret.png")
        price_deviation_figure({c.label: (c.days, c.price_deviation) for c in curves},
                               path / "price_deviation.png")
    return fits
