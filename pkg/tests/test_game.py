from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import reference_config, random_config, random_state, stable_step
from herdsim import epidemic, game
from herdsim.model import ModelConfig, SolverError, extreme_states, uniform_state

GRAD_H = 1e-6
GRAD_RTOL = 1e-5


def directional(DF, a, b):
    return DF[:, a] - DF[:, b]


def test_payoff_formula():
    cfg = reference_config()
    eta = np.linspace(0.1, 0.5, cfg.n)
    F = game.payoff_from_eta(eta, cfg)
    s = cfg.class_strategy
    np.testing.assert_allclose(F, -0.1 * s - (1 - s) * eta, atol=1e-15)


def test_payoff_gradient_matches_finite_differences():
    rng = np.random.default_rng(21)
    for _ in range(20):
        cfg = random_config(rng)
        x = random_state(rng, cfg)
        DF = game.payoff_gradient(x, cfg)
        for (a, b), fd in game.finite_difference_gradient(x, cfg, h=GRAD_H).items():
            an = directional(DF, a, b)
            assert np.max(np.abs(an - fd)) <= GRAD_RTOL * max(np.max(np.abs(fd)), 1e-12)


def test_gradient_is_rank_one():
    cfg = reference_config()
    DF = game.payoff_gradient(uniform_state(cfg), cfg)
    sv = np.linalg.svd(DF, compute_uv=False)
    assert sv[1] < 1e-12 * sv[0]


def test_gradient_raises_disease_free():
    rng = np.random.default_rng(22)
    cfg = random_config(rng, "disease-free")
    with pytest.raises(SolverError):
        game.payoff_gradient(random_state(rng, cfg), cfg)


def test_difference_matrix():
    np.testing.assert_array_equal(game.difference_matrix(3), [[-1, 0], [1, -1], [0, 1]])
    assert game.difference_matrix(1).shape == (1, 0)


def test_certificate_flags_positive_entries():
    cfg = reference_config()
    DF = -game.payoff_gradient(uniform_state(cfg), cfg)
    cert = game.submodularity_certificate(DF, cfg)
    assert not cert
    d, c, row, col, val = cert.violations[0]
    assert val > 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_steady_gradient_is_submodular(seed):
    rng = np.random.default_rng(seed)
    cfg = random_config(rng)
    DF = game.payoff_gradient(random_state(rng, cfg), cfg)
    assert game.submodularity_certificate(DF, cfg)


@pytest.mark.parametrize("dt", [0.1, 0.5, 2.0])
def test_time_dependent_gradient_is_submodular(dt):
    rng = np.random.default_rng(23)
    for _ in range(5):
        cfg = random_config(rng)
        x = random_state(rng, cfg)
        traj = epidemic.integrate(np.full(cfg.n, 0.01), x, cfg, dt, stable_step(cfg))
        DF = game.time_dependent_gradient(traj.I, traj.t, cfg)
        assert np.all(DF <= 0)
        assert game.submodularity_certificate(DF, cfg)


def _td_error(dt):
    cfg = reference_config()
    x = uniform_state(cfg)
    I0 = np.full(cfg.n, 0.01)
    step = dt / 200

    def payoff(xx, config):
        return game.payoff_from_eta(epidemic.integrate(I0, xx, config, dt, step).final.I, config)

    traj = epidemic.integrate(I0, x, cfg, dt, step)
    DF = game.time_dependent_gradient(traj.I, traj.t, cfg)
    fds = game.finite_difference_gradient(x, cfg, h=1e-7, payoff=payoff)
    return max(np.max(np.abs(directional(DF, a, b) - fd)) / np.max(np.abs(fd)) for (a, b), fd in fds.items())


def test_time_dependent_gradient_is_leading_order():
    # the integral formula drops feedback through I, an O(dt) relative effect
    e1, e2 = _td_error(0.02), _td_error(0.01)
    assert e2 < 0.03
    assert 1.8 < e1 / e2 < 2.2


def test_best_response_least_element_on_ties():
    br = game.best_response(np.array([-1.0, -0.5, -0.5]), 0.3)
    np.testing.assert_allclose(br, [0.0, 0.3, 0.0])


def test_gap_zero_at_nash_and_nonnegative():
    cfg = reference_config()
    x_ne = extreme_states(cfg)[1]
    assert game.is_nash(x_ne, cfg)
    F = game.payoff_steady(x_ne, cfg)
    assert game.gap(x_ne, F, cfg) <= 1e-12
    rng = np.random.default_rng(24)
    for _ in range(50):
        x = random_state(rng, cfg)
        assert game.gap(x, game.payoff_steady(x, cfg), cfg) >= -1e-12


def test_is_nash_rejects_non_equilibrium():
    cfg = reference_config()
    check = game.is_nash(extreme_states(cfg)[0], cfg)
    assert not check
    assert check.regret.max() > 1e-3


def test_critical_reward_closed_form():
    # ratio 1 gives 1 - 1/4
    cfg = ModelConfig((1,), (1.0,), ((0.0, 0.5),), 1.0, 1.0, reward=-0.1)
    per, worst = game.critical_reward(cfg)
    assert worst == pytest.approx(0.75, abs=1e-12)
    assert per[0] == worst


def test_slope_at_smin_relation():
    cfg = ModelConfig((2,), (1.0,), ((0.1, 0.5),), 1.3, 0.9, reward=-0.2)
    _, rc = game.critical_reward(cfg)
    assert game.payoff_slope(np.array([0.1]), 2, 1.0, cfg)[0] == pytest.approx(cfg.reward + rc, abs=1e-12)


def test_dominance_thresholds():
    base = ModelConfig((1,), (1.0,), ((0.0, 0.3, 0.6),), 1.0, 1.0)
    assert game.dominance_check(base.replace(reward=-0.75)) == 0.0
    assert game.dominance_check(base.replace(reward=-0.7)) is None
    assert game.dominance_check(base.replace(reward=-0.7), report=0.0) == 0.0


def test_dominance_requires_common_strategies():
    with pytest.raises(ValueError):
        game.dominance_check(reference_config())


def test_misreport_observation():
    cfg = reference_config()
    obs = game.Observation.misreport(0.0, cfg)
    assert np.all(obs.eta == 0.0)
    F = game.payoff_steady(uniform_state(cfg), cfg, report=0.0)
    np.testing.assert_allclose(F, cfg.class_strategy * cfg.reward)
