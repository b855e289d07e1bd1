"""Hourly trace files: outdoor temperature and day-ahead wholesale price.

CSV layout::

    timestamp,value_<unit>
    2012-07-01T00:00:00,24.5
    ...

``unit`` is ``degC`` for temperature and ``usd_per_mwh`` (or
``usd_per_kwh``) for prices.  Timestamps are ISO-8601, strictly hourly
increasing, and every day must carry all 24 hours.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .errors import TraceError

HOURS = 24
# the one place the wholesale price unit conversion lives
KWH_PER_MWH = 1000.0

UNITS = {
    "degC": ("temperature", 1.0),
    "usd_per_mwh": ("price", 1.0 / KWH_PER_MWH),
    "usd_per_kwh": ("price", 1.0),
}
DEFAULT_UNIT = {"temperature": "degC", "price": "usd_per_mwh"}


@dataclass
class TraceFile:
    timestamps: list
    values: np.ndarray
    unit: str

    @property
    def kind(self):
        return UNITS[self.unit][0]


@dataclass
class SynthProfile:
    """Daily sinusoid ``mean + amplitude cos(2 pi (h - peak_hour) / 24)`` plus jitter."""

    mean: float = 27.0
    amplitude: float = 6.0
    peak_hour: float = 15.0
    jitter: float = 1.0
    start: str = "2012-07-01"
    unit: str = "degC"

    @classmethod
    def for_kind(cls, kind, **overrides):
        base = {"temperature": {}, "price": dict(mean=50.0, amplitude=20.0, peak_hour=17.0, jitter=3.0,
                                                  unit="usd_per_mwh")}[kind]
        return cls(**{**base, **overrides})


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def synth_trace(days: int, profile: SynthProfile | None = None, seed=0) -> TraceFile:
    if days < 1:
        raise TraceError("days must be at least 1")
    profile = profile or SynthProfile()
    if profile.unit not in UNITS:
        raise TraceError(f"unknown unit {profile.unit!r}")
    rng = np.random.default_rng(seed)
    h = np.tile(np.arange(HOURS), days)
    values = (profile.mean + profile.amplitude * np.cos(2 * np.pi * (h - profile.peak_hour) / HOURS)
              + profile.jitter * rng.standard_normal(h.size))
    start = datetime.fromisoformat(profile.start)
    stamps = [start + timedelta(hours=k) for k in range(h.size)]
    return TraceFile(stamps, values, profile.unit)


def dumps_trace(trace: TraceFile) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["timestamp", f"value_{trace.unit}"])
    for ts, v in zip(trace.timestamps, trace.values):
        w.writerow([ts.isoformat(), repr(float(v))])
    return buf.getvalue()


def write_trace(trace: TraceFile, path) -> None:
    atomic_write_text(path, dumps_trace(trace))


def read_trace(path) -> TraceFile:
    """Parse and validate a trace file without unit conversion."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise TraceError(f"{path}: {exc}") from exc
    if not rows or len(rows[0]) != 2 or rows[0][0] != "timestamp" or not rows[0][1].startswith("value_"):
        raise TraceError(f"{path}: header must be 'timestamp,value_<unit>'")
    unit = rows[0][1][len("value_"):]
    if unit not in UNITS:
        raise TraceError(f"{path}: unknown unit {unit!r} (expected one of {sorted(UNITS)})")
    stamps, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            ts, val = row
            stamps.append(datetime.fromisoformat(ts))
            values.append(float(val))
        except ValueError as exc:
            raise TraceError(f"{path}:{lineno}: {exc}") from exc
    _check_contiguous(stamps, path)
    return TraceFile(stamps, np.array(values), unit)


def _check_contiguous(stamps, path):
    if not stamps:
        raise TraceError(f"{path}: no records")
    for prev, cur in zip(stamps, stamps[1:]):
        if cur <= prev:
            raise TraceError(f"{path}: non-monotonic timestamp {cur.isoformat()} after {prev.isoformat()}")
    by_day = {}
    for ts in stamps:
        by_day.setdefault(ts.date(), []).append(ts.hour)
    days = sorted(by_day)
    for i, day in enumerate(days):
        if sorted(by_day[day]) != list(range(HOURS)):
            raise TraceError(f"{path}: day {i} ({day.isoformat()}) has {len(by_day[day])} hourly records, "
                             f"expected {HOURS}")
        if i and (day - days[i - 1]).days != 1:
            raise TraceError(f"{path}: day {i} ({day.isoformat()}) does not follow {days[i - 1].isoformat()}")


def daily_vectors(trace: TraceFile) -> np.ndarray:
    """Values reshaped to ``(days, 24)`` and converted to $/kWh or degC."""
    return trace.values.reshape(-1, HOURS) * UNITS[trace.unit][1]


def load_trace(path, kind: str) -> np.ndarray:
    trace = read_trace(path)
    if trace.kind != kind:
        raise TraceError(f"{path}: holds a {trace.kind} trace, expected {kind}")
    return daily_vectors(trace)
