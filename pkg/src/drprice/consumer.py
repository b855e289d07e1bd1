"""Price-responsive HVAC consumers.

Each consumer runs a first-order thermal model

    x_i = x_{i-1} + alpha (a_i - x_{i-1}) - beta u_i + xi_i

and, knowing the whole day's prices, minimizes
``sum_i kappa (x_i - x_des_i)^2 + pi.u`` with full state information.
Aggregate consumption is affine in the price vector, which is what
:func:`extract_affine` recovers numerically.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .demand import AffineDemandModel
from .errors import DegenerateControlError, InputError, NonAffineDemandError

log = logging.getLogger(__name__)

# Number of noisy evaluations used for the sample noise covariance.
DEFAULT_COV_SAMPLES = 4000
AFFINE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class HvacParams:
    alpha: float
    beta: float
    kappa: float
    x0: float
    x_des: np.ndarray

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InputError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.beta < 0:
            raise InputError(f"beta must be positive (cooling), got {self.beta}")
        if not self.kappa > 0:
            raise InputError(f"kappa must be positive, got {self.kappa}")
        object.__setattr__(self, "x_des", np.atleast_1d(np.asarray(self.x_des, dtype=float)))


@dataclass(frozen=True, eq=False)
class ThermalTrace:
    outdoor: np.ndarray
    process_noise_std: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "outdoor", np.atleast_1d(np.asarray(self.outdoor, dtype=float)))
        if self.process_noise_std < 0:
            raise InputError("process_noise_std must be non-negative")

    @property
    def horizon(self):
        return self.outdoor.size


@dataclass(frozen=True, eq=False)
class ConsumptionPlan:
    u: np.ndarray
    x: np.ndarray
    cost: float


def hvac_step(x_prev, a_i, u_i, params: HvacParams, xi_i=0.0):
    return x_prev + params.alpha * (a_i - x_prev) - params.beta * u_i + xi_i


@dataclass
class _Population:
    """Column-stacked consumer parameters, shape ``(K,)`` or ``(K, H)``."""

    alpha: np.ndarray
    beta: np.ndarray
    kappa: np.ndarray
    x0: np.ndarray
    x_des: np.ndarray = field(repr=False)

    @classmethod
    def stack(cls, population, H):
        for p in population:
            if p.x_des.shape != (H,):
                raise InputError(f"x_des has shape {p.x_des.shape}, expected ({H},)")
            if p.beta == 0:
                raise DegenerateControlError("beta = 0: HVAC input has no effect on temperature")
        return cls(
            alpha=np.array([p.alpha for p in population], dtype=float),
            beta=np.array([p.beta for p in population], dtype=float),
            kappa=np.array([p.kappa for p in population], dtype=float),
            x0=np.array([p.x0 for p in population], dtype=float),
            x_des=np.array([p.x_des for p in population], dtype=float).reshape(len(population), H),
        )

    def __len__(self):
        return self.alpha.size


def _post_control_targets(pop: _Population, pi):
    """Backward induction for the optimal pre-noise temperature of each hour.

    Write ``g = (1 - alpha) x_{i-1} + alpha a_i`` for the free response and
    ``y = g - beta u_i`` for the temperature the controller aims at.  With
    the cost-to-go ``V_i(x) = P x^2 + q x + const`` the stage problem is

        min_y  kappa (y - x_des_i)^2 + pi_i (g - y) / beta + P y^2 + q y

    (process noise only adds constants since it is zero mean and enters
    additively).  Its minimizer does not depend on ``g``, hence on
    ``x_{i-1}``, so the cost-to-go one stage earlier is linear:
    ``P' = 0`` and ``q' = pi_i (1 - alpha) / beta``.
    """
    K, H = pop.x_des.shape
    targets = np.empty((K, H))
    P = np.zeros(K)
    q = np.zeros(K)
    for i in range(H - 1, -1, -1):
        denom = 2.0 * (pop.kappa + P)
        targets[:, i] = (2.0 * pop.kappa * pop.x_des[:, i] + pi[i] / pop.beta - q) / denom
        P = np.zeros(K)
        q = pi[i] * (1.0 - pop.alpha) / pop.beta
    return targets


def _simulate(pop: _Population, outdoor, targets, xi):
    """Apply the feedback law hour by hour; returns ``(u, x)`` of shape (K, H)."""
    K, H = targets.shape
    u = np.empty((K, H))
    x = np.empty((K, H))
    x_prev = pop.x0
    for i in range(H):
        g = x_prev + pop.alpha * (outdoor[i] - x_prev)
        u[:, i] = (g - targets[:, i]) / pop.beta
        x[:, i] = g - pop.beta * u[:, i] + xi[:, i]
        x_prev = x[:, i]
    return u, x


def _check_price(pi, H):
    pi = np.atleast_1d(np.asarray(pi, dtype=float))
    if pi.shape != (H,):
        raise InputError(f"price vector has shape {pi.shape}, expected ({H},)")
    return pi


def optimal_plan(params: HvacParams, trace: ThermalTrace, pi) -> ConsumptionPlan:
    """Noise-free optimal consumption of one consumer facing prices ``pi``."""
    H = trace.horizon
    pi = _check_price(pi, H)
    pop = _Population.stack([params], H)
    targets = _post_control_targets(pop, pi)
    u, x = _simulate(pop, trace.outdoor, targets, np.zeros((1, H)))
    u, x = u[0], x[0]
    cost = float(np.sum(params.kappa * (x - params.x_des) ** 2) + pi @ u)
    return ConsumptionPlan(u=u, x=x, cost=cost)


def plan_objective(params: HvacParams, trace: ThermalTrace, pi, u) -> float:
    """Deterministic objective of an arbitrary control trajectory ``u``."""
    x_prev = params.x0
    total = 0.0
    for i, a in enumerate(trace.outdoor):
        x_prev = hvac_step(x_prev, a, u[i], params)
        total += params.kappa * (x_prev - params.x_des[i]) ** 2 + pi[i] * u[i]
    return float(total)


def process_noise(n_consumers, H, std, noise_seed):
    """Per-consumer process noise.

    Row ``k`` of a ``(K, H)`` standard-normal block drawn from
    ``numpy.random.default_rng(noise_seed)`` belongs to consumer ``k``, so a
    consumer's noise does not depend on the order plans are evaluated in.
    """
    if std == 0 or noise_seed is None:
        return np.zeros((n_consumers, H))
    return std * np.random.default_rng(noise_seed).standard_normal((n_consumers, H))


def aggregate_demand(population, trace: ThermalTrace, pi, noise_seed=None):
    """Total realized consumption of ``population`` under prices ``pi``.

    ``noise_seed=None`` (or zero noise std) gives the noise-free demand.
    """
    H = trace.horizon
    pi = _check_price(pi, H)
    if len(population) == 0:
        return np.zeros(H)
    pop = _Population.stack(population, H)
    targets = _post_control_targets(pop, pi)
    xi = process_noise(len(pop), H, trace.process_noise_std, noise_seed)
    u, _ = _simulate(pop, trace.outdoor, targets, xi)
    return u.sum(axis=0)


def extract_affine(
    population,
    trace: ThermalTrace,
    cov_samples: int = DEFAULT_COV_SAMPLES,
    seed: int = 0,
    n_checks: int = 10,
) -> AffineDemandModel:
    """Recover ``(A, b, Sigma_w)`` with ``d(pi) = b - A pi + w``.

    ``b`` and ``A`` come from noise-free evaluations at the zero price and at
    unit price vectors.  ``Sigma_w`` is the sample covariance of
    ``cov_samples`` noisy evaluations at the zero price.
    """
    H = trace.horizon
    quiet = ThermalTrace(trace.outdoor, 0.0)
    b = aggregate_demand(population, quiet, np.zeros(H))
    A = np.empty((H, H))
    for j in range(H):
        e = np.zeros(H)
        e[j] = 1.0
        A[:, j] = b - aggregate_demand(population, quiet, e)

    rng = np.random.default_rng(seed)
    scale = max(1.0, float(np.abs(b).max()))
    for _ in range(n_checks):
        pi = rng.standard_normal(H)
        resid = np.max(np.abs(aggregate_demand(population, quiet, pi) - (b - A @ pi)))
        if resid >= AFFINE_TOL * scale:
            raise NonAffineDemandError(f"affine reconstruction residual {resid:.3e}")

    if trace.process_noise_std > 0 and len(population) > 0:
        seeds = np.random.SeedSequence(seed).spawn(cov_samples)
        W = np.array([aggregate_demand(population, trace, np.zeros(H), s) for s in seeds]) - b
        sigma_w = np.atleast_2d(np.cov(W, rowvar=False))
    else:
        sigma_w = np.zeros((H, H))
    log.debug("extracted affine demand: H=%d, lambda_min(sym A)=%.4g", H, min_sym_eig(A))
    return AffineDemandModel(A=A, b=b, sigma_w=sigma_w)


def noise_map(population, trace: ThermalTrace):
    """Linear maps ``M_k`` with ``w = sum_k M_k xi_k`` for each consumer.

    Used as an exact reference for the sampled covariance; the demand noise
    is linear in the process noise because the feedback law is affine.
    """
    H = trace.horizon
    pop = _Population.stack(population, H)
    targets = _post_control_targets(pop, np.zeros(H))
    base, _ = _simulate(pop, trace.outdoor, targets, np.zeros((len(pop), H)))
    maps = np.empty((len(pop), H, H))
    for j in range(H):
        xi = np.zeros((len(pop), H))
        xi[:, j] = 1.0
        u, _ = _simulate(pop, trace.outdoor, targets, xi)
        maps[:, :, j] = u - base
    return maps


def exact_noise_cov(population, trace: ThermalTrace):
    maps = noise_map(population, trace)
    return trace.process_noise_std**2 * np.einsum("kij,klj->il", maps, maps)


def min_sym_eig(A):
    A = np.asarray(A, dtype=float)
    return float(np.linalg.eigvalsh(0.5 * (A + A.T)).min()) if A.size else 0.0


def homogeneous_population(n, alpha=0.5, beta=1.0, kappa=10.0, x0=18.0, x_des=18.0, H=24):
    x_des = np.broadcast_to(np.asarray(x_des, dtype=float), (H,)).copy()
    p = HvacParams(alpha=alpha, beta=beta, kappa=kappa, x0=x0, x_des=x_des)
    return [p] * n


def jittered_population(n, rng, alpha=0.5, beta=1.0, kappa=10.0, x0=18.0, x_des=18.0, H=24,
                        alpha_jitter=0.0, beta_jitter=0.0):
    """Population with uniform multiplicative jitter on alpha and beta."""
    x_des = np.broadcast_to(np.asarray(x_des, dtype=float), (H,)).copy()
    a = alpha * (1 + alpha_jitter * rng.uniform(-1, 1, n))
    bb = beta * (1 + beta_jitter * rng.uniform(-1, 1, n))
    return [HvacParams(alpha=float(a[k]), beta=float(bb[k]), kappa=kappa, x0=x0, x_des=x_des) for k in range(n)]
