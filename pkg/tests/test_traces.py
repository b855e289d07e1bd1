import numpy as np
import pytest

from drprice.errors import TraceError
from drprice.traces import (
    KWH_PER_MWH, SynthProfile, daily_vectors, dumps_trace, load_trace, read_trace, synth_trace, write_trace,
)


def write_rows(path, rows, header="timestamp,value_degC"):
    path.write_text(header + "\n" + "".join(f"{t},{v}\n" for t, v in rows))
    return path


def day_rows(date, n=24, value=21.5):
    return [(f"{date}T{h:02d}:00:00", value) for h in range(n)]


def test_constant_day(tmp_path):
    days = load_trace(write_rows(tmp_path / "t.csv", day_rows("2012-07-01")), "temperature")
    assert days.shape == (1, 24) and np.all(days == 21.5)


def test_missing_hour_names_day(tmp_path):
    rows = day_rows("2012-07-01") + day_rows("2012-07-02", n=23)
    with pytest.raises(TraceError, match=r"day 1 \(2012-07-02\) has 23"):
        read_trace(write_rows(tmp_path / "t.csv", rows))


def test_non_monotonic(tmp_path):
    rows = day_rows("2012-07-01")
    rows[3], rows[4] = rows[4], rows[3]
    with pytest.raises(TraceError, match="non-monotonic"):
        read_trace(write_rows(tmp_path / "t.csv", rows))


def test_gap_between_days(tmp_path):
    rows = day_rows("2012-07-01") + day_rows("2012-07-03")
    with pytest.raises(TraceError, match="does not follow"):
        read_trace(write_rows(tmp_path / "t.csv", rows))


def test_bad_header_and_kind(tmp_path):
    with pytest.raises(TraceError):
        read_trace(write_rows(tmp_path / "a.csv", day_rows("2012-07-01"), header="time,temp"))
    with pytest.raises(TraceError, match="unknown unit"):
        read_trace(write_rows(tmp_path / "b.csv", day_rows("2012-07-01"), header="timestamp,value_degF"))
    with pytest.raises(TraceError, match="expected price"):
        load_trace(write_rows(tmp_path / "c.csv", day_rows("2012-07-01")), "price")
    with pytest.raises(TraceError):
        read_trace(tmp_path / "nope.csv")


def test_price_unit_conversion(tmp_path):
    p = write_rows(tmp_path / "p.csv", day_rows("2012-07-01", value=50.0), header="timestamp,value_usd_per_mwh")
    assert np.all(load_trace(p, "price") == 50.0 / KWH_PER_MWH)


def test_synth_round_trip_bit_exact(tmp_path):
    tr = synth_trace(30, SynthProfile(), seed=11)
    write_trace(tr, tmp_path / "s.csv")
    back = read_trace(tmp_path / "s.csv")
    assert np.array_equal(back.values, tr.values) and back.timestamps == tr.timestamps
    assert dumps_trace(back) == (tmp_path / "s.csv").read_text()


def test_synth_determinism_and_distinct_seeds():
    vals = [synth_trace(5, seed=s).values for s in (1, 2, 3)]
    assert not np.array_equal(vals[0], vals[1]) and not np.array_equal(vals[1], vals[2])
    assert np.array_equal(synth_trace(5, seed=2).values, vals[1])


def test_synth_recovers_profile():
    prof = SynthProfile(mean=27.0, amplitude=6.0, peak_hour=15.0, jitter=1.0)
    y = synth_trace(30, prof, seed=0).values
    h = np.tile(np.arange(24), 30)
    X = np.column_stack([np.ones(h.size), np.cos(2 * np.pi * h / 24), np.sin(2 * np.pi * h / 24)])
    (m, c, s), *_ = np.linalg.lstsq(X, y, rcond=None)
    assert m == pytest.approx(27.0, rel=0.05)
    assert np.hypot(c, s) == pytest.approx(6.0, rel=0.05)


def test_synth_rejects_no_days():
    with pytest.raises(TraceError):
        synth_trace(0)


def test_daily_vectors_shape():
    assert daily_vectors(synth_trace(3, SynthProfile.for_kind("price"))).shape == (3, 24)
