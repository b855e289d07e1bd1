"""Matplotlib figure helpers for the report verb.

The Agg backend is selected on import so reports render on headless
machines.  Figures are saved as PNG with the creation-software metadata
stripped, which keeps reruns byte-stable for a fixed matplotlib version.
"""

from __future__ import annotations

from math import sqrt

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

GOLDEN = (sqrt(5.0) - 1.0) / 2.0
WIDTH_IN = 6.0

STYLE = {
    "figure.figsize": (WIDTH_IN, WIDTH_IN * GOLDEN),
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "font.size": 10,
    "axes.labelsize": 10,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
}


def new_figure(nrows=1, ncols=1, scale=1.0):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(nrows, ncols, figsize=(WIDTH_IN * scale, WIDTH_IN * scale * GOLDEN))
    return fig, ax


def save(fig, path):
    with plt.rc_context(STYLE):
        fig.tight_layout()
        fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)


def cumulative_regret_figure(curves, path, normalizer=None):
    """``curves`` maps a label to ``(days, mean, lower, upper)``; the band is drawn when given."""
    fig, ax = new_figure()
    scale = 1.0 / normalizer if normalizer else 1.0
    finals = [float(v[1][-1]) for v in curves.values() if v[1][-1] > 0]
    log_y = len(finals) > 1 and max(finals) > 1e3 * min(finals)
    if log_y:
        ax.set_yscale("log")
    for label, (days, mean, lo, hi) in curves.items():
        if log_y and not (mean > 0).any():
            # an identically zero curve cannot be drawn on a log axis; keep it in the legend
            ax.plot([], [], label=f"{label} (zero)")
            continue
        line, = ax.plot(days, mean * scale, label=label)
        if lo is not None and hi is not None:
            ax.fill_between(days, lo * scale, hi * scale, color=line.get_color(), alpha=0.15, lw=0)
    ax.set_xlabel("day")
    ax.set_ylabel("cumulative regret / tr(Sigma_w)" if normalizer else "cumulative regret [kWh^2]")
    ax.legend(loc="upper left")
    save(fig, path)


def price_deviation_figure(curves, path):
    """``curves`` maps a label to ``(days, relative deviation)``."""
    fig, ax = new_figure()
    for label, (days, dev) in curves.items():
        ax.plot(days, dev, label=label)
    # an oracle curve is identically zero; log scale only when something is positive
    if any((dev > 0).any() for _, dev in curves.values()):
        ax.set_yscale("log")
    ax.set_xlabel("day")
    ax.set_ylabel("||pi - pi*|| / ||pi*||")
    ax.legend(loc="upper right")
    save(fig, path)
