"""Retail pricing policies.

A policy posts day ``t``'s price from the demand and dispatch history up to
``t - 1`` and the dispatch ``d_da_t``.  The episode loop asks for the price
before the day's demand is drawn and reports the outcome afterwards.

Every policy object carries state for ``n_runs`` independent Monte Carlo
runs that share a dispatch schedule (leading array axis = run).  The
single-run interface :meth:`Policy.price` / :meth:`Policy.observe` works on
``n_runs == 1`` objects; the ensemble engine uses the ``*_batch`` methods.
Only row-wise numpy operations are used, so one run's prices never depend
on which other runs share the batch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .demand import AffineDemandModel, optimal_price
from .errors import ModelError, PolicyError, UsageError

log = logging.getLogger(__name__)

DEFAULT_KEY_DECIMALS = 6
DEFAULT_COND_THRESHOLD = 1e8


@dataclass
class PolicyInput:
    history_demand: list
    history_dispatch: list
    today_dispatch: np.ndarray
    history_price: list = field(default_factory=list)

    def __post_init__(self):
        n = len(self.history_demand)
        if len(self.history_dispatch) != n or len(self.history_price) != n:
            raise UsageError("history lists must have equal length")
        self.today_dispatch = np.atleast_1d(np.asarray(self.today_dispatch, dtype=float))

    @property
    def day(self):
        return len(self.history_demand)


def _rows(x, n_runs, H):
    x = np.asarray(x, dtype=float)
    if x.shape == (H,):
        x = np.broadcast_to(x, (n_runs, H))
    if x.shape != (n_runs, H):
        raise PolicyError(f"array has shape {x.shape}, expected ({n_runs}, {H})")
    return x


class Policy:
    name = "policy"

    def __init__(self, H, n_runs=1):
        self.H = H
        self.n_runs = n_runs
        self.n_obs = 0
        self.flags = np.zeros(n_runs, dtype=np.int64)

    def inform(self, model: AffineDemandModel) -> None:
        """Hook through which the runner reveals the true model; learners ignore it."""

    # batch interface
    def price_batch(self, d_da) -> np.ndarray:
        raise NotImplementedError

    def observe_batch(self, prices, demands, d_da, day=None):
        if day is not None and day != self.n_obs:
            raise UsageError(f"{self.name}: observe for day {day}, expected day {self.n_obs}")
        d_da = np.atleast_1d(np.asarray(d_da, dtype=float))
        self._update(_rows(prices, self.n_runs, self.H), _rows(demands, self.n_runs, self.H), d_da)
        self.n_obs += 1
        return self

    def _update(self, prices, demands, d_da):
        pass

    # single-run interface
    def _single(self):
        if self.n_runs != 1:
            raise UsageError("single-run interface used on a batched policy")

    def price(self, inp: PolicyInput) -> np.ndarray:
        self._single()
        return self.price_batch(inp.today_dispatch)[0]

    def observe(self, price, demand, dispatch, day=None):
        self._single()
        return self.observe_batch(np.atleast_2d(price), np.atleast_2d(demand), dispatch, day)

    @property
    def last_flag(self):
        return int(self.flags[0])

    def dump_state(self) -> str:
        return f"policy {self.name}\nruns {self.n_runs}\nn_obs {self.n_obs}\n"


class OraclePolicy(Policy):
    """Posts ``A^-1 (b - d_da)`` for the model it is told is in force.

    Under Markov switching runs see different models, so :meth:`inform`
    also accepts one model per run.
    """

    name = "oracle"

    def __init__(self, model: AffineDemandModel | None = None, n_runs=1):
        super().__init__(model.horizon if model is not None else 0, n_runs)
        self.models = None if model is None else [model] * n_runs

    def inform(self, model):
        self.models = list(model) if isinstance(model, (list, tuple)) else [model] * self.n_runs
        self.H = self.models[0].horizon

    def price_batch(self, d_da):
        if self.models is None:
            raise PolicyError("oracle has not been told the demand model")
        cache = {}
        out = np.empty((self.n_runs, self.H))
        for r, m in enumerate(self.models):
            if id(m) not in cache:
                cache[id(m)] = optimal_price(m, d_da)
            out[r] = cache[id(m)]
        return out

    def price(self, inp):
        return oracle_price(self.models[0], inp)


def oracle_price(model: AffineDemandModel, inp: PolicyInput) -> np.ndarray:
    return optimal_price(model, inp.today_dispatch)


def _inverse(A, what):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if np.linalg.cond(A) > 1e14:
        raise PolicyError(f"{what} needs an invertible A")
    return np.linalg.inv(A)


class KnownAPolicy(Policy):
    """Stochastic approximation with the true sensitivity ``A`` and unknown ``b``.

    ``pi_t = mean(pi_0..pi_{t-1}) + A^-1 (mean(d_0..d_{t-1}) - d_da_t)``;
    day 0 posts ``initial_price``.
    """

    name = "known_a"

    def __init__(self, A, initial_price=0.0, n_runs=1):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        super().__init__(A.shape[0], n_runs)
        self.A = A
        self.A_inv = _inverse(A, "known-A policy")
        self.initial_price = np.broadcast_to(np.asarray(initial_price, dtype=float), (self.H,)).copy()
        self.sum_price = np.zeros((n_runs, self.H))
        self.sum_demand = np.zeros((n_runs, self.H))

    def price_batch(self, d_da):
        n = self.n_obs
        if n == 0:
            return np.tile(self.initial_price, (self.n_runs, 1))
        gap = self.sum_demand / n - np.asarray(d_da, dtype=float)
        return self.sum_price / n + np.einsum("ij,rj->ri", self.A_inv, gap)

    def _update(self, prices, demands, d_da):
        self.sum_price += prices
        self.sum_demand += demands


def known_a_price(A, inp: PolicyInput) -> np.ndarray:
    """Known-A price computed directly from the posted-price and demand history."""
    n = inp.day
    if n == 0:
        raise PolicyError("known-A price needs at least one prior day; day 0 posts the initial price")
    A_inv = _inverse(A, "known-A policy")
    gap = np.mean(inp.history_demand, axis=0) - inp.today_dispatch
    return np.mean(inp.history_price, axis=0) + A_inv @ gap


@dataclass
class LevelStats:
    count: int
    sum_price: np.ndarray
    sum_demand: np.ndarray
    sum_dispatch_residual: np.ndarray


class PwlsaPolicy(Policy):
    """Piecewise linear stochastic approximation.

    One running-average recursion per distinct day-ahead dispatch level,
    keyed by the dispatch rounded to ``key_decimals`` decimals.  A level
    seen for the first time gets ``default_price``.
    """

    name = "pwlsa"

    def __init__(self, gamma, default_price=0.0, H=1, key_decimals=DEFAULT_KEY_DECIMALS, n_runs=1):
        super().__init__(H, n_runs)
        if not gamma > 0:
            raise PolicyError(f"gamma must be positive, got {gamma}")
        self.gamma = float(gamma)
        self.default_price = np.broadcast_to(np.asarray(default_price, dtype=float), (H,)).copy()
        self.key_decimals = key_decimals
        self.dictionary: dict[tuple, LevelStats] = {}

    def key(self, dispatch):
        return tuple(np.round(np.atleast_1d(np.asarray(dispatch, dtype=float)), self.key_decimals).tolist())

    def price_batch(self, d_da):
        return pwlsa_prices(self, d_da)

    def price(self, inp):
        return pwlsa_price(self, inp)

    def _update(self, prices, demands, d_da):
        k = self.key(d_da)
        stats = self.dictionary.get(k)
        if stats is None:
            z = np.zeros((self.n_runs, self.H))
            stats = self.dictionary[k] = LevelStats(0, z.copy(), z.copy(), z.copy())
        stats.count += 1
        stats.sum_price += prices
        stats.sum_demand += demands
        stats.sum_dispatch_residual += demands - d_da

    def dump_state(self):
        lines = [super().dump_state().rstrip("\n"), f"gamma {self.gamma:.17g}", f"levels {len(self.dictionary)}"]
        for i, (k, s) in enumerate(self.dictionary.items()):
            lines.append(f"level {i} count {s.count}")
            lines.append("  key " + " ".join(f"{v:.17g}" for v in k))
            for r in range(self.n_runs):
                lines.append(f"  run {r} mean_price " + " ".join(f"{v:.17g}" for v in s.sum_price[r] / s.count))
        return "\n".join(lines) + "\n"


def pwlsa_prices(state: PwlsaPolicy, d_da) -> np.ndarray:
    """``mean_k [pi_k + gamma (d_k - d_da_t)]`` over past days at today's level."""
    d_da = np.atleast_1d(np.asarray(d_da, dtype=float))
    stats = state.dictionary.get(state.key(d_da))
    if stats is None or stats.count == 0:
        return np.tile(state.default_price, (state.n_runs, 1))
    n = stats.count
    return stats.sum_price / n + state.gamma * (stats.sum_demand - n * d_da) / n


def pwlsa_price(state: PwlsaPolicy, inp: PolicyInput) -> np.ndarray:
    state._single()
    return pwlsa_prices(state, inp.today_dispatch)[0]


class GreedyPolicy(Policy):
    """Certainty-equivalent least squares.

    Each day fits ``d = b - A pi`` to all observations (ridge penalty on the
    slope block) and posts ``A_hat^-1 (b_hat - d_da)``.  Until ``H + 1``
    observations exist it explores around ``initial_price`` with Gaussian
    perturbations of std ``explore_std`` drawn from its own generator.

    A day is flagged when the normal-equation matrix or ``A_hat`` has a
    condition number above ``cond_threshold``.  With ``guard=True`` a flagged
    day reposts the fallback price (the run's last posted price).  The guard
    makes the failure visible; it does not cure it, since repeated prices add
    collinear rows.  Non-finite prices always fall back.
    """

    name = "greedy"

    def __init__(self, H, ridge=0.0, initial_price=0.0, explore_std=1.0, guard=True,
                 cond_threshold=DEFAULT_COND_THRESHOLD, seed=None, n_runs=1):
        super().__init__(H, n_runs)
        if ridge < 0:
            raise PolicyError("ridge must be non-negative")
        self.ridge = float(ridge)
        self.initial_price = np.broadcast_to(np.asarray(initial_price, dtype=float), (H,)).copy()
        self.explore_std = float(explore_std)
        self.guard = guard
        self.cond_threshold = cond_threshold
        seeds = seed if isinstance(seed, (list, tuple)) else [seed] * n_runs
        if len(seeds) != n_runs:
            raise PolicyError("need one seed per run")
        self.rngs = [np.random.default_rng(s) for s in seeds]
        # normal equations for regressors [1, -pi]; coefficients stack [b; A^T]
        self.gram = np.zeros((n_runs, H + 1, H + 1))
        self.cross = np.zeros((n_runs, H + 1, H))
        self.observations: list[tuple[np.ndarray, np.ndarray]] = []
        self.fallback_price = np.tile(self.initial_price, (n_runs, 1)).astype(float)
        self.flag_log: list[tuple[int, int]] = []

    def fit(self):
        """Return ``(A_hat, b_hat, cond_gram)`` per run.

        Solved through the SVD of the normal matrix; directions with zero
        singular value are dropped (minimum-norm solution).
        """
        G = self.gram.copy()
        G[:, 1:, 1:] += self.ridge * np.eye(self.H)
        U, s, Vt = np.linalg.svd(G)
        with np.errstate(divide="ignore"):
            cond = np.where(s[:, -1] > 0, s[:, 0] / s[:, -1], np.inf)
            tol = s[:, :1] * max(G.shape[1:]) * np.finfo(float).eps
            inv_s = np.where(s > tol, 1.0 / np.where(s > tol, s, 1.0), 0.0)
        coef = np.swapaxes(Vt, 1, 2) @ (inv_s[:, :, None] * (np.swapaxes(U, 1, 2) @ self.cross))
        return np.swapaxes(coef[:, 1:, :], 1, 2), coef[:, 0, :], cond

    def price_batch(self, d_da):
        d_da = np.atleast_1d(np.asarray(d_da, dtype=float))
        self.flags = np.zeros(self.n_runs, dtype=np.int64)
        if self.n_obs < self.H + 1:
            z = np.array([g.standard_normal(self.H) for g in self.rngs])
            prices = self.initial_price + self.explore_std * z
        else:
            A_hat, b_hat, cond_g = self.fit()
            U, s, Vt = np.linalg.svd(A_hat)
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                cond_a = np.where(s[:, -1] > 0, s[:, 0] / s[:, -1], np.inf)
                rhs = np.einsum("rji,rj->ri", U, b_hat - d_da) / s
                prices = np.einsum("rji,rj->ri", Vt, rhs)
            singular = ~((cond_g <= self.cond_threshold) & (cond_a <= self.cond_threshold))
            bad = ~np.all(np.isfinite(prices), axis=1)
            use_fallback = bad | (singular & self.guard)
            prices[use_fallback] = self.fallback_price[use_fallback]
            self.flags = (singular | bad).astype(np.int64)
            for r in np.flatnonzero(self.flags):
                self.flag_log.append((r, self.n_obs))
                log.debug("greedy run %d: near-singular fit on day %d (cond %.3g / %.3g)",
                          r, self.n_obs, cond_g[r], cond_a[r])
        self.fallback_price = prices.copy()
        return prices

    def _update(self, prices, demands, d_da):
        X = np.concatenate([np.ones((self.n_runs, 1)), -prices], axis=1)
        self.gram += X[:, :, None] * X[:, None, :]
        self.cross += X[:, :, None] * demands[:, None, :]
        if self.n_runs == 1:
            self.observations.append((prices[0].copy(), demands[0].copy()))


def greedy_price(state: GreedyPolicy, inp: PolicyInput) -> np.ndarray:
    return state.price(inp)


@dataclass
class PolicySpec:
    """Serializable policy description used by configs and worker processes.

    With ``gamma=None`` PWLSA uses ``gamma_factor / lambda_min(A)`` of the
    experiment's reference model, i.e. the experimenter supplies the bound.
    """

    kind: str
    gamma: float | None = None
    gamma_factor: float = 0.5
    initial_price: float = 0.0
    ridge: float = 0.0
    explore_std: float = 1.0
    guard: bool = True
    cond_threshold: float = DEFAULT_COND_THRESHOLD
    key_decimals: int = DEFAULT_KEY_DECIMALS
    label: str | None = None

    KINDS = ("oracle", "known_a", "pwlsa", "greedy")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise PolicyError(f"unknown policy kind {self.kind!r}")
        if self.label is None:
            self.label = self.kind


def gamma_lower_bound(A) -> float:
    """Smallest feedback gain covered by the log-regret guarantee: ``1 / (2 lambda_min)``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    lam = float(np.linalg.eigvalsh(0.5 * (A + A.T)).min())
    if lam <= 0:
        raise ModelError("A is not positive definite")
    return 1.0 / (2.0 * lam)


def resolve_gamma(spec: PolicySpec, reference: AffineDemandModel) -> float:
    bound = gamma_lower_bound(reference.A)
    gamma = spec.gamma if spec.gamma is not None else spec.gamma_factor * 2.0 * bound
    if gamma < bound:
        log.warning("pwlsa gamma %.4g is below 1/(2 lambda_min(A)) = %.4g; log-regret guarantee void",
                    gamma, bound)
    return gamma


def build_policy(spec: PolicySpec, reference: AffineDemandModel, seeds=None, n_runs=1) -> Policy:
    """Instantiate ``spec`` for ``n_runs`` runs; ``reference`` is the initial true model."""
    H = reference.horizon
    if spec.kind == "oracle":
        return OraclePolicy(reference, n_runs)
    if spec.kind == "known_a":
        return KnownAPolicy(reference.A, spec.initial_price, n_runs)
    if spec.kind == "pwlsa":
        return PwlsaPolicy(resolve_gamma(spec, reference), spec.initial_price, H, spec.key_decimals, n_runs)
    return GreedyPolicy(H, spec.ridge, spec.initial_price, spec.explore_std, spec.guard,
                        spec.cond_threshold, seeds, n_runs)
