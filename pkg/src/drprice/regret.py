"""Regret bookkeeping, day-by-day episodes and seeded Monte Carlo ensembles.

Seeding: run ``i`` of an ensemble with master seed ``s`` uses
``SeedSequence([s, i])``, spawned into three streams (demand noise, Markov
switching, policy randomness).  A single episode with seed ``s`` is run
``0``, so ``run_ensemble(cfg, 1)`` reproduces ``run_episode(cfg)``.

Runs are simulated in lockstep blocks.  All arithmetic is row-wise, so a
run's trace is bit-identical whatever block or worker process it lands in.
"""

from __future__ import annotations

import copy
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .demand import AffineDemandModel, MarkovModelProcess, optimal_price, step_markov
from .errors import DrPriceError, InputError, SimulationError
from .policies import PolicySpec, build_policy

QUANTILES = (0.05, 0.5, 0.95)
DEFAULT_BLOCK = 100


def day_regret(model: AffineDemandModel, pi, d_da) -> float:
    """Excess expected loss over the optimal price: ``||b - A pi - d_da||^2``.

    The noise term of the expected loss cancels against the loss floor
    ``tr(Sigma_w)``, so the value is deterministic given ``pi``.  The
    episode engine evaluates the same quantity as ``||A (pi - pi*)||^2``.
    """
    r = model.b - model.A @ np.asarray(pi, dtype=float) - np.asarray(d_da, dtype=float)
    return float(r @ r)


@dataclass
class EpisodeConfig:
    """One simulated episode.

    Day 0 is the start-up day on which every policy posts its initial
    price; regret is recorded for days ``1..horizon_days``.  Day ``t`` uses
    ``dispatch_schedule[t % len(dispatch_schedule)]``.
    """

    horizon_days: int
    dispatch_schedule: np.ndarray
    model: AffineDemandModel | MarkovModelProcess
    policy_spec: PolicySpec
    seed: int = 0
    run_index: int = 0

    def __post_init__(self):
        if self.horizon_days < 1:
            raise InputError("horizon_days must be at least 1")
        sched = np.atleast_2d(np.asarray(self.dispatch_schedule, dtype=float))
        if sched.shape[1] != self.model.horizon:
            raise InputError(f"dispatch dimension {sched.shape[1]} != model horizon {self.model.horizon}")
        self.dispatch_schedule = sched


@dataclass
class RegretTrace:
    per_day: np.ndarray
    cumulative: np.ndarray
    price_deviation: np.ndarray
    flags: np.ndarray
    day0_regret: float = 0.0
    prices: np.ndarray | None = field(default=None, repr=False)

    @property
    def horizon(self):
        return self.per_day.size


def episode_seed(master, run_index):
    return np.random.SeedSequence([int(master), int(run_index)])


def _model_paths(model, markov_seeds, T):
    """Per-run list of the models in force on days ``0..T``."""
    if not isinstance(model, MarkovModelProcess):
        return None
    paths = []
    for ss in markov_seeds:
        proc = copy.copy(model)
        rng = np.random.default_rng(ss)
        path = [proc.model]
        for _ in range(T):
            path.append(step_markov(proc, rng))
        paths.append(path)
    return paths


def _matvec(A, X):
    """Row-wise ``A @ x``; ``A`` shared ``(H, H)`` or per run ``(R, H, H)``."""
    return np.einsum("ij,rj->ri" if A.ndim == 2 else "rij,rj->ri", A, X)


def simulate_block(config: EpisodeConfig, run_indices, keep_prices=False) -> list[RegretTrace]:
    """Simulate the runs ``run_indices`` of ``config`` in lockstep."""
    T = config.horizon_days
    R = len(run_indices)
    streams = [episode_seed(config.seed, i).spawn(3) for i in run_indices]
    paths = _model_paths(config.model, [s[1] for s in streams], T)
    reference = config.model.model if isinstance(config.model, MarkovModelProcess) else config.model
    H = reference.horizon
    policy = build_policy(config.policy_spec, reference, seeds=[s[2] for s in streams], n_runs=R)
    Z = np.stack([np.random.default_rng(s[0]).standard_normal((T + 1, H)) for s in streams])
    sched = config.dispatch_schedule
    n_levels = len(sched)

    if paths is not None:
        states = config.model.states
        index = {id(m): k for k, m in enumerate(states)}
        state_idx = np.array([[index[id(m)] for m in p] for p in paths])
        A_stack = np.stack([m.A for m in states])
        b_stack = np.stack([m.b for m in states])
        L_stack = np.stack([m.noise_factor for m in states])

    per_day = np.empty((R, T + 1))
    dev = np.empty((R, T + 1))
    flags = np.zeros((R, T + 1), dtype=np.int64)
    prices_out = np.empty((R, T + 1, H)) if keep_prices else None
    pstar_cache = {}
    for t in range(T + 1):
        d_da = sched[t % n_levels]
        if paths is None:
            A, b, L = reference.A, reference.b, reference.noise_factor
            models = None
        else:
            k = state_idx[:, t]
            A, b, L = A_stack[k], b_stack[k], L_stack[k]
            models = [p[t] for p in paths]
        try:
            policy.inform(models if models is not None else reference)
            pi = policy.price_batch(d_da)
            ms = models if models is not None else [reference]
            pstar = []
            for m in ms:
                key = (id(m), t % n_levels)
                if key not in pstar_cache:
                    pstar_cache[key] = optimal_price(m, d_da)
                pstar.append(pstar_cache[key])
            pstar = np.array(pstar)
            mean_d = b - _matvec(A, pi)
            d_rt = mean_d + _matvec(L, Z[:, t])
            policy.observe_batch(pi, d_rt, d_da, day=t)
        except (DrPriceError, np.linalg.LinAlgError, FloatingPointError) as exc:
            raise SimulationError(t, exc) from exc
        # b - d_da = A pi*, so the residual equals A (pi - pi*); this form is
        # exactly zero at the optimum and avoids cancelling large b - d_da
        r = _matvec(A, pi - pstar)
        per_day[:, t] = (r * r).sum(axis=1)
        norm_star = np.sqrt((pstar * pstar).sum(axis=1))
        gap = pi - pstar
        gap = np.sqrt((gap * gap).sum(axis=1))
        dev[:, t] = np.where(norm_star > 0, gap / np.where(norm_star > 0, norm_star, 1.0), gap)
        flags[:, t] = policy.flags
        if keep_prices:
            prices_out[:, t] = pi
    return [
        RegretTrace(
            per_day=per_day[r, 1:].copy(),
            cumulative=np.cumsum(per_day[r, 1:]),
            price_deviation=dev[r, 1:].copy(),
            flags=flags[r, 1:].copy(),
            day0_regret=float(per_day[r, 0]),
            prices=None if prices_out is None else prices_out[r],
        )
        for r in range(R)
    ]


def run_episode(config: EpisodeConfig, keep_prices: bool = False) -> RegretTrace:
    """Deterministic single episode: run ``config.run_index`` of seed ``config.seed``."""
    return simulate_block(config, [config.run_index], keep_prices)[0]


@dataclass
class EnsembleResult:
    """Stacked traces of ``num_runs`` episodes, arrays of shape ``(num_runs, T)``."""

    per_day: np.ndarray
    cumulative: np.ndarray
    price_deviation: np.ndarray
    flags: np.ndarray

    @property
    def num_runs(self):
        return self.per_day.shape[0]

    @property
    def horizon(self):
        return self.per_day.shape[1]

    @staticmethod
    def _colmean(M):
        # exactly rounded sums, so the mean is independent of run order
        n = M.shape[0]
        return np.array([math.fsum(col) / n for col in M.T])

    def mean(self, what="cumulative"):
        return self._colmean(getattr(self, what))

    def stderr(self, what="cumulative"):
        M = getattr(self, what)
        n = M.shape[0]
        if n < 2:
            return np.zeros(M.shape[1])
        mu = self._colmean(M)
        var = np.array([math.fsum(c) for c in ((M - mu) ** 2).T]) / (n - 1)
        return np.sqrt(var / n)

    def quantiles(self, what="cumulative", qs=QUANTILES):
        return np.quantile(getattr(self, what), qs, axis=0)

    def mean_trace(self) -> RegretTrace:
        return RegretTrace(
            per_day=self.mean("per_day"),
            cumulative=self.mean("cumulative"),
            price_deviation=self.mean("price_deviation"),
            flags=self.flags.sum(axis=0),
        )

    @property
    def flagged_days(self):
        return int(self.flags.sum())


def _run_block(args):
    config, indices = args
    return simulate_block(config, indices)


def run_ensemble(config: EpisodeConfig, num_runs: int, workers: int = 1,
                 block: int = DEFAULT_BLOCK) -> EnsembleResult:
    """Run ``num_runs`` independent episodes seeded from ``config.seed``."""
    if num_runs < 1:
        raise InputError("num_runs must be at least 1")
    base = config.run_index
    jobs = [(config, list(range(base + s, base + min(s + block, num_runs))))
            for s in range(0, num_runs, block)]
    if workers <= 1 or len(jobs) == 1:
        blocks = [_run_block(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(_run_block, jobs))
    traces = [t for blk in blocks for t in blk]
    return EnsembleResult(
        per_day=np.array([t.per_day for t in traces]),
        cumulative=np.array([t.cumulative for t in traces]),
        price_deviation=np.array([t.price_deviation for t in traces]),
        flags=np.array([t.flags for t in traces]),
    )


def log_fit(cumulative, days=None):
    """Least-squares fit ``cum(t) = slope ln t + intercept``; returns ``(slope, intercept, r2)``."""
    y = np.asarray(cumulative, dtype=float)
    t = np.arange(1, y.size + 1) if days is None else np.asarray(days, dtype=float)
    X = np.column_stack([np.log(t), np.ones(t.size)])
    (slope, icpt), *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ np.array([slope, icpt])
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(icpt), r2


def linear_slope(values, start, stop):
    """Least-squares slope of ``values[start:stop]`` against the day index."""
    y = np.asarray(values[start:stop], dtype=float)
    t = np.arange(start, start + y.size, dtype=float)
    return float(np.polyfit(t, y, 1)[0])


def dyadic_ratios(cumulative, ks=range(6, 12)):
    """``cum(2^k) / ln(2^k)``, with ``cumulative[0]`` holding day 1."""
    c = np.asarray(cumulative)
    return np.array([c[2**k - 1] / math.log(2**k) for k in ks])
