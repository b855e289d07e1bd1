import numpy as np
import pytest

from drprice.demand import isotropic
from drprice.errors import PolicyError, UsageError
from drprice.policies import (
    GreedyPolicy, KnownAPolicy, OraclePolicy, PolicyInput, PolicySpec, PwlsaPolicy, build_policy,
    gamma_lower_bound, greedy_price, known_a_price, oracle_price, pwlsa_price, resolve_gamma,
)

from conftest import random_pd

SCALAR = isotropic([[2.0]], [10.0], 0.0)
D4 = np.array([4.0])


def inp(prices=(), demands=(), dispatch=None, today=D4):
    n = len(prices)
    return PolicyInput([np.atleast_1d(d) for d in demands],
                       dispatch if dispatch is not None else [today] * n,
                       today, [np.atleast_1d(p) for p in prices])


def run_noise_free(policy, model, d_da, days):
    prices = []
    for t in range(days):
        p = policy.price(inp(today=d_da))
        prices.append(p)
        policy.observe(p, model.mean_demand(p), d_da, day=t)
    return np.array(prices)


def test_policy_input_checks():
    with pytest.raises(UsageError):
        PolicyInput([np.ones(1)], [], D4, [np.ones(1)])
    assert inp([0.0, 1.0], [10.0, 8.0]).day == 2


def test_oracle_examples(rng):
    assert oracle_price(SCALAR, inp()) == pytest.approx([3.0])
    assert np.allclose(oracle_price(SCALAR, inp(today=np.array([10.0]))), 0)
    m = isotropic(random_pd(rng, 24), rng.uniform(5, 10, 24), 1.0)
    d = rng.uniform(0, 5, 24)
    ls, *_ = np.linalg.lstsq(m.A, m.b - d, rcond=None)
    np.testing.assert_allclose(OraclePolicy(m).price(inp(today=d)), ls, atol=1e-8)
    with pytest.raises(PolicyError):
        OraclePolicy().price_batch(D4)


def test_known_a_one_step_exact():
    pol = KnownAPolicy([[2.0]])
    prices = run_noise_free(pol, SCALAR, D4, 6)
    assert prices[0] == 0.0
    assert np.all(prices[1:] == 3.0)


def test_known_a_history_form():
    assert known_a_price([[2.0]], inp([0.0], [10.0])) == pytest.approx([3.0])
    # fixed point: average price optimal and average demand on dispatch
    assert known_a_price([[2.0]], inp([3.0, 3.0], [4.0, 4.0])) == pytest.approx([3.0])
    with pytest.raises(PolicyError):
        known_a_price([[2.0]], inp())
    with pytest.raises(PolicyError):
        KnownAPolicy(np.zeros((2, 2)))


def test_pwlsa_new_level_default():
    pol = PwlsaPolicy(0.5, default_price=1.25, H=1)
    assert pol.price(inp()) == 1.25
    pol.observe([1.25], [7.5], D4, day=0)
    assert pol.price(inp(today=np.array([6.0]))) == 1.25


def test_pwlsa_gamma_inverse_A():
    pol = PwlsaPolicy(0.5, 0.0, 1)
    prices = run_noise_free(pol, SCALAR, D4, 10)
    assert prices[0] == 0 and np.all(prices[1:] == 3.0)
    assert pwlsa_price(pol, inp()) == 3.0


def test_pwlsa_converges_like_one_over_t():
    pol = PwlsaPolicy(1.0, 0.0, 1)
    err = np.abs(run_noise_free(pol, SCALAR, D4, 1001)[1:, 0] - 3.0)
    t = np.arange(1, 1001)
    assert err[-1] < 1e-2
    assert np.max(err * t) < 10 * err[0]


def test_pwlsa_levels_partition_history():
    pol = PwlsaPolicy(0.5, 0.0, 2)
    levels = [np.array([1.0, 2.0]), np.array([3.0, 1.0]), np.array([1.0, 2.0 + 1e-9])]
    for t, d in enumerate(levels):
        before = {k: s.count for k, s in pol.dictionary.items()}
        pol.observe(np.zeros(2), np.ones(2), d, day=t)
        changed = [k for k, s in pol.dictionary.items() if s.count != before.get(k, 0)]
        assert len(changed) == 1
    # 1e-9 rounds away at 6 decimals
    assert sorted(s.count for s in pol.dictionary.values()) == [1, 2]
    assert "levels 2" in pol.dump_state()


def test_greedy_two_point_fit():
    pol = GreedyPolicy(1, seed=0)
    pol.observe([0.0], [10.0], D4, day=0)
    pol.observe([1.0], [8.0], D4, day=1)
    A, b, _ = pol.fit()
    assert A[0, 0, 0] == pytest.approx(2.0) and b[0, 0] == pytest.approx(10.0)
    assert greedy_price(pol, inp([0.0, 1.0], [10.0, 8.0])) == pytest.approx([3.0])
    assert pol.last_flag == 0
    assert len(pol.observations) == 2


def test_greedy_identical_prices_flag_and_fallback():
    pol = GreedyPolicy(1, initial_price=0.7, seed=0)
    pol.observe([1.0], [8.0], D4, day=0)
    pol.observe([1.0], [8.0], D4, day=1)
    p = pol.price(inp([1.0, 1.0], [8.0, 8.0]))
    assert pol.last_flag == 1 and p == pytest.approx([0.7])
    assert pol.flag_log == [(0, 2)]


def test_greedy_guard_off_still_flags():
    pol = GreedyPolicy(1, guard=False, seed=0)
    pol.observe([1.0], [8.0], D4, day=0)
    pol.observe([1.0], [8.0], D4, day=1)
    pol.price(inp([1.0, 1.0], [8.0, 8.0]))
    assert pol.last_flag == 1


def test_greedy_exploration_is_seeded():
    a = GreedyPolicy(3, seed=4).price_batch(np.zeros(3))
    b = GreedyPolicy(3, seed=4).price_batch(np.zeros(3))
    assert np.array_equal(a, b) and not np.array_equal(a, GreedyPolicy(3, seed=5).price_batch(np.zeros(3)))


def test_observe_order_enforced():
    pol = PwlsaPolicy(0.5, 0.0, 1)
    pol.observe([0.0], [10.0], D4, day=0)
    with pytest.raises(UsageError):
        pol.observe([0.0], [10.0], D4, day=0)
    with pytest.raises(UsageError):
        PwlsaPolicy(0.5, 0.0, 1, n_runs=2).price(inp())


def test_record_replay(rng):
    m = isotropic(random_pd(rng, 3), [5.0, 6.0, 7.0], 0.5)
    d = np.array([4.0, 5.0, 5.5])
    spec = PolicySpec("greedy", explore_std=0.5)
    live = build_policy(spec, m, seeds=[9])
    tape = []
    for t in range(12):
        p = live.price(inp(today=d))
        y = m.mean_demand(p) + 0.5 * rng.standard_normal(3)
        tape.append((p, y))
        live.observe(p, y, d, day=t)
    replay = build_policy(spec, m, seeds=[9])
    for t, (p, y) in enumerate(tape):
        assert np.array_equal(replay.price(inp(today=d)), p)
        replay.observe(p, y, d, day=t)


def test_gamma_resolution():
    A = np.diag([4.0, 1.0])
    assert gamma_lower_bound(A) == 0.5
    m = isotropic(A, np.ones(2), 0)
    assert resolve_gamma(PolicySpec("pwlsa"), m) == 0.5
    assert resolve_gamma(PolicySpec("pwlsa", gamma_factor=1.0), m) == 1.0
    assert resolve_gamma(PolicySpec("pwlsa", gamma=3.0), m) == 3.0


def test_gamma_below_bound_warns(caplog):
    m = isotropic(np.diag([4.0, 1.0]), np.ones(2), 0)
    resolve_gamma(PolicySpec("pwlsa", gamma=0.1), m)
    assert "below" in caplog.text


def test_unknown_kind():
    with pytest.raises(PolicyError):
        PolicySpec("thompson")
