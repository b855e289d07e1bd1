import csv
import warnings

import numpy as np
import pytest

from drprice.config import from_dict
from drprice.experiment import run_experiment
from drprice.report import FIT_COLUMNS, checkpoint_days, report


def fits(path):
    with open(path / "report_fits.csv", newline="") as fh:
        return {r["policy"]: r for r in csv.DictReader(fh)}


def inline(tmp_path, policies, **kw):
    data = {"horizon_days": 200, "num_runs": 2000, "output_dir": str(tmp_path / "b"), "policies": policies,
            "demand": {"source": "inline", "A": [[2.0]], "b": [10.0], "sigma": 1.0}, "dispatch": [[4.0]]}
    return from_dict({**data, **kw})


def test_oracle_fit_is_zero(tmp_path):
    b = run_experiment(inline(tmp_path, ["oracle"], num_runs=5, horizon_days=20))
    text = report(b.path)
    assert text.splitlines()[0] == ",".join(FIT_COLUMNS)
    row = fits(b.path)["oracle"]
    assert float(row["log_slope_kwh2"]) == 0 and float(row["final_cum_regret_kwh2"]) == 0
    for name in ("report_price_deviation.csv", "cumulative_regret.png", "price_deviation.png"):
        assert (b.path / name).stat().st_size > 0


def test_known_a_slope_near_noise_trace(tmp_path):
    b = run_experiment(inline(tmp_path, ["known_a"]))
    report(b.path, figures=False)
    row = fits(b.path)["known_a"]
    assert float(row["log_slope_norm_1"]) == pytest.approx(1.0, rel=0.1)
    assert float(row["log_r2_1"]) > 0.99


def test_greedy_guard_off_flags(tmp_path):
    # a single dispatch level gives the regression no price variation once exploration ends
    data = {"horizon_days": 30, "num_runs": 500, "output_dir": str(tmp_path / "g"),
            "policies": [{"kind": "greedy", "guard": False, "explore_std": 0.1}],
            "demand": {"source": "inline", "A": [[2.0, 0.3], [0.3, 1.5]], "b": [10.0, 9.0], "sigma": 0.01},
            "dispatch": [[4.0, 5.0]]}
    b = run_experiment(from_dict(data))
    report(b.path, figures=False)
    row = fits(b.path)["greedy"]
    assert int(row["flagged_days"]) >= 1 and row["first_flagged_day"] != ""


def test_deviation_table_days(tmp_path):
    assert checkpoint_days(30) == [1, 2, 5, 10, 20, 30]
    assert checkpoint_days(50) == [1, 2, 5, 10, 20, 50]
    b = run_experiment(inline(tmp_path, ["pwlsa", "known_a"], num_runs=50, horizon_days=30))
    report(b.path, figures=False)
    lines = (b.path / "report_price_deviation.csv").read_text().splitlines()
    assert lines[0] == "day,pwlsa_price_dev_rel,known_a_price_dev_rel"
    assert [int(line.split(",")[0]) for line in lines[1:]] == checkpoint_days(30)
    dev = np.array([float(line.split(",")[1]) for line in lines[1:]])
    assert dev[-1] < dev[0]


def test_log_axis_figure_with_zero_curve_is_quiet(tmp_path):
    from drprice.plotting import cumulative_regret_figure
    days = np.arange(1, 11)
    zero = np.zeros(10)
    curves = {"oracle": (days, zero, zero, zero), "a": (days, days * 1.0, None, None),
              "b": (days, days * 1e5, days * 5e4, days * 2e5)}
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        cumulative_regret_figure(curves, tmp_path / "f.png")
    assert (tmp_path / "f.png").stat().st_size > 0
