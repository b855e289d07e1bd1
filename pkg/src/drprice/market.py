"""Stylized two-settlement wholesale market.

The day-ahead market is cleared by an unconstrained OPF between a concave
quadratic retailer utility and a quadratic generation cost.  Real-time
deviations are settled at the real-time marginal cost.  Energy is in kWh,
prices in $/kWh and ``theta`` in $/kWh^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass(frozen=True, eq=False)
class QuadraticCost:
    """Generation cost ``c(p) = theta * p.p``."""

    theta: float

    def __post_init__(self):
        if not self.theta > 0:
            raise InputError(f"theta must be positive, got {self.theta}")

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        return self.theta * float(p @ p)

    def gradient(self, p):
        return 2.0 * self.theta * np.asarray(p, dtype=float)


@dataclass(frozen=True, eq=False)
class QuadraticUtility:
    """Retailer utility ``u(d) = eta.d - d.Q.d / 2`` with ``Q`` symmetric PSD."""

    eta: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        eta = np.atleast_1d(np.asarray(self.eta, dtype=float))
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if eta.ndim != 1 or Q.shape != (eta.size, eta.size):
            raise InputError(f"eta has shape {eta.shape} but Q has shape {Q.shape}")
        if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max())):
            raise InputError("Q must be symmetric")
        if np.linalg.eigvalsh(Q).min() < -1e-10 * max(1.0, np.abs(Q).max()):
            raise InputError("Q must be positive semidefinite")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "Q", Q)

    @property
    def horizon(self):
        return self.eta.size

    def __call__(self, d):
        d = np.asarray(d, dtype=float)
        return float(self.eta @ d - 0.5 * d @ self.Q @ d)

    def gradient(self, d):
        return self.eta - self.Q @ np.asarray(d, dtype=float)


@dataclass(frozen=True, eq=False)
class MarketClearing:
    d_da: np.ndarray
    lambda_da: np.ndarray
    surplus_da: float


@dataclass(frozen=True, eq=False)
class Settlement:
    d_rt: np.ndarray
    lambda_rt: np.ndarray
    payment_da: float
    payment_rt: float
    surplus_rt: float
    loss: float


def _vector(x, n, name):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (n,):
        raise InputError(f"{name} has shape {x.shape}, expected ({n},)")
    return x


def solve_opf(u: QuadraticUtility, c: QuadraticCost) -> MarketClearing:
    """Clear the day-ahead market: maximize ``u(d) - c(d)``.

    The first-order condition ``eta - Q d = 2 theta d`` gives the unique
    dispatch ``d = (Q + 2 theta I)^-1 eta``; the day-ahead price is the
    marginal generation cost there.
    """
    H = u.horizon
    M = u.Q + 2.0 * c.theta * np.eye(H)
    d_da = np.linalg.solve(M, u.eta)
    lambda_da = c.gradient(d_da)
    surplus = u(d_da) - float(lambda_da @ d_da)
    return MarketClearing(d_da=d_da, lambda_da=lambda_da, surplus_da=surplus)


def settle(
    clearing: MarketClearing,
    d_rt,
    c_rt: QuadraticCost,
    u: QuadraticUtility,
) -> Settlement:
    """Real-time settlement of the deviation ``d_rt - d_da``.

    A negative ``payment_rt`` is compensation paid to the retailer.
    """
    d_da = clearing.d_da
    d_rt = _vector(d_rt, d_da.size, "d_rt")
    if u.horizon != d_da.size:
        raise InputError(f"utility horizon {u.horizon} != dispatch length {d_da.size}")
    lambda_rt = c_rt.gradient(d_rt)
    payment_da = float(clearing.lambda_da @ d_da)
    payment_rt = float(lambda_rt @ (d_rt - d_da))
    surplus_rt = u(d_rt) - (payment_da + payment_rt)
    return Settlement(
        d_rt=d_rt,
        lambda_rt=lambda_rt,
        payment_da=payment_da,
        payment_rt=payment_rt,
        surplus_rt=surplus_rt,
        loss=clearing.surplus_da - surplus_rt,
    )


def surplus_loss_approx(d_rt, d_da, theta: float) -> float:
    """Quadratic approximation ``theta * ||d_rt - d_da||^2`` of the surplus loss."""
    diff = np.asarray(d_rt, dtype=float) - np.asarray(d_da, dtype=float)
    return float(theta * (diff @ diff))


def kkt_residual(u: QuadraticUtility, c: QuadraticCost, d) -> float:
    """Max-norm gap between marginal utility and marginal cost at ``d``."""
    return float(np.max(np.abs(u.gradient(d) - c.gradient(d)), initial=0.0))
