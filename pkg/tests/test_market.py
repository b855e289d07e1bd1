import numpy as np
import pytest

from drprice.errors import InputError
from drprice.market import (
    QuadraticCost, QuadraticUtility, kkt_residual, settle, solve_opf, surplus_loss_approx,
)

from conftest import random_psd


def scalar_market():
    u = QuadraticUtility(eta=[10.0], Q=[[1.0]])
    c = QuadraticCost(0.5)
    return u, c, solve_opf(u, c)


def projected_gradient_opf(u, c, iters=20000):
    # plain gradient ascent on u(d) - c(d); the feasible set is all of R^H
    L = np.linalg.eigvalsh(u.Q).max() + 2 * c.theta
    d = np.zeros(u.horizon)
    for _ in range(iters):
        step = u.gradient(d) - c.gradient(d)
        d = d + step / L
        if np.abs(step).max() < 1e-13:
            break
    return d


def test_zero_marginal_utility():
    u = QuadraticUtility(np.zeros(3), np.eye(3))
    m = solve_opf(u, QuadraticCost(2.0))
    assert np.all(m.d_da == 0) and np.all(m.lambda_da == 0) and m.surplus_da == 0


def test_scalar_closed_form():
    _, _, m = scalar_market()
    assert m.d_da == pytest.approx([5.0])
    assert m.lambda_da == pytest.approx([5.0])


def test_opf_matches_iterative_solver(rng):
    H = 24
    u = QuadraticUtility(rng.uniform(1, 5, H), random_psd(rng, H))
    c = QuadraticCost(1.0)
    m = solve_opf(u, c)
    np.testing.assert_allclose(m.d_da, projected_gradient_opf(u, c), atol=1e-6)
    assert kkt_residual(u, c, m.d_da) < 1e-10
    np.testing.assert_allclose(m.lambda_da, 2 * c.theta * m.d_da)
    assert m.surplus_da == pytest.approx(u(m.d_da) - m.lambda_da @ m.d_da)


def test_no_deviation_no_payment():
    u, c, m = scalar_market()
    s = settle(m, m.d_da, c, u)
    assert s.payment_rt == 0 and s.loss == 0


@pytest.mark.parametrize("d_rt, lam_rt, pay_rt", [(6.0, 6.0, 6.0), (4.0, 4.0, -4.0)])
def test_settlement_hand_values(d_rt, lam_rt, pay_rt):
    u, c, m = scalar_market()
    s = settle(m, [d_rt], c, u)
    assert s.lambda_rt == pytest.approx([lam_rt])
    assert s.payment_rt == pytest.approx(pay_rt)
    assert s.payment_da == pytest.approx(25.0)
    assert s.loss == pytest.approx(1.5)


def test_loss_approximation():
    assert surplus_loss_approx([3.0, 4.0], [3.0, 4.0], 0.7) == 0
    assert surplus_loss_approx([6.0], [5.0], 0.5) == pytest.approx(0.5)
    assert surplus_loss_approx(np.ones(24), np.zeros(24), 1.0) == 24


def test_exact_minus_approx_gap_is_quadratic():
    u, c, m = scalar_market()
    gaps = []
    for dev in (1.0, 0.1, 0.01):
        exact = settle(m, m.d_da + dev, c, u).loss
        gaps.append(exact - surplus_loss_approx(m.d_da + dev, m.d_da, c.theta))
    # neglected terms theta dev^2 + Q dev^2 / 2 = dev^2
    np.testing.assert_allclose(gaps, [1.0, 1e-2, 1e-4], rtol=1e-9)


def test_validation():
    with pytest.raises(InputError):
        QuadraticCost(0.0)
    with pytest.raises(InputError):
        QuadraticUtility(np.ones(2), np.eye(3))
    with pytest.raises(InputError):
        QuadraticUtility(np.ones(2), [[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(InputError):
        QuadraticUtility(np.ones(2), -np.eye(2))
    u, c, m = scalar_market()
    with pytest.raises(InputError):
        settle(m, [1.0, 2.0], c, u)
