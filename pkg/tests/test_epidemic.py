from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import reference_config, random_config, random_state, stable_step
from herdsim import epidemic
from herdsim.model import ModelConfig, SolverError, extreme_states, uniform_state


def single(lam=2.0, gamma=1.0, d=1, s=0.0):
    return ModelConfig((d,), (1.0,), ((s,),), lam, gamma)


def test_single_class_closed_form():
    cfg = single()
    assert epidemic.steady_theta_fixed_point(np.array([1.0]), cfg) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("lam, gamma, d, s", [(3.0, 1.0, 2, 0.2), (1.5, 0.7, 1, 0.1), (5.0, 2.0, 4, 0.6)])
def test_single_class_closed_form_general(lam, gamma, d, s):
    cfg = single(lam, gamma, d, s)
    expected = 1 - gamma / (lam * d * (1 - s))
    assert epidemic.steady_theta_fixed_point(np.array([1.0]), cfg) == pytest.approx(expected, abs=1e-12)


def test_fixed_point_matches_bisection_random():
    rng = np.random.default_rng(11)
    for _ in range(30):
        cfg = random_config(rng)
        x = random_state(rng, cfg)
        a = epidemic.steady_theta_fixed_point(x, cfg)
        b = epidemic.steady_theta_bisection(x, cfg)
        assert abs(a - b) <= 1e-10


def test_disease_free_steady_state_is_zero():
    rng = np.random.default_rng(12)
    cfg = random_config(rng, "disease-free")
    x = random_state(rng, cfg)
    ss = epidemic.steady_state(x, cfg)
    assert ss.kind == "disease-free" and ss.theta_bar == 0.0
    assert np.all(ss.I_bar == 0.0)
    with pytest.raises(SolverError):
        epidemic.steady_theta_bisection(x, cfg)


def test_all_isolated_gives_zero():
    cfg = ModelConfig((2,), (1.0,), ((0.5, 1.0),), 4.0, 1.0)
    assert epidemic.steady_state(np.array([0.0, 1.0]), cfg).theta_bar == 0.0


def test_map_contracts_on_invariant_interval():
    # z = 0 is a repelling fixed point, so only [theta_bar, 1] is contracted
    rng = np.random.default_rng(13)
    for _ in range(20):
        cfg = random_config(rng)
        x = random_state(rng, cfg)
        tb = epidemic.steady_theta_fixed_point(x, cfg)
        z = np.linspace(tb, 1.0, 200)
        m = np.array([epidemic.fixed_point_map(v, x, cfg) for v in z])
        slopes = np.abs(np.diff(m) / np.diff(z))
        assert slopes.max() < 1.0


def test_zero_is_fixed_point_with_slope_above_one():
    cfg = reference_config()
    x = uniform_state(cfg)
    h = 1e-9
    assert epidemic.fixed_point_map(0.0, x, cfg) == 0.0
    assert epidemic.fixed_point_map(h, x, cfg) / h > 1.0


def test_steady_infection_matches_fixed_point_of_ode():
    cfg = reference_config()
    x = uniform_state(cfg)
    ss = epidemic.steady_state(x, cfg)
    assert np.max(np.abs(epidemic.derivative(ss.I_bar, x, cfg))) < 1e-12
    assert epidemic.theta_of(ss.I_bar, x, cfg) == pytest.approx(ss.theta_bar, abs=1e-12)


def test_integrate_converges_endemic_and_disease_free():
    rng = np.random.default_rng(14)
    cfg = random_config(rng)
    x = random_state(rng, cfg)
    traj = epidemic.integrate(np.full(cfg.n, 0.02), x, cfg, 50 / cfg.gamma, stable_step(cfg))
    assert np.max(np.abs(traj.final.I - epidemic.steady_state(x, cfg).I_bar)) < 1e-6
    cfg = random_config(rng, "disease-free")
    x = random_state(rng, cfg)
    traj = epidemic.integrate(np.full(cfg.n, 0.5), x, cfg, 50 / cfg.gamma, stable_step(cfg))
    assert np.max(traj.final.I) < 1e-6


def test_rk4_order_four():
    cfg = reference_config()
    x = uniform_state(cfg)
    I0 = np.full(cfg.n, 0.05)
    ref = epidemic.integrate(I0, x, cfg, 1.0, 1e-4).final.I
    e1 = np.abs(epidemic.integrate(I0, x, cfg, 1.0, 0.02).final.I - ref).max()
    e2 = np.abs(epidemic.integrate(I0, x, cfg, 1.0, 0.01).final.I - ref).max()
    assert 12.0 < e1 / e2 < 20.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_states_stay_in_unit_box(seed):
    rng = np.random.default_rng(seed)
    cfg = random_config(rng)
    x = random_state(rng, cfg)
    traj = epidemic.integrate(rng.uniform(0, 1, cfg.n), x, cfg, 2.0, stable_step(cfg))
    assert traj.I.min() >= 0.0 and traj.I.max() <= 1.0
    assert traj.max_clamp < 1e-9


def test_integrate_rejects_bad_arguments():
    cfg = reference_config()
    x = uniform_state(cfg)
    with pytest.raises(ValueError):
        epidemic.integrate(np.zeros(cfg.n), x, cfg, 1.0, step=0.0)
    with pytest.raises(ValueError):
        epidemic.integrate(np.zeros(cfg.n), x, cfg, -1.0)
    with pytest.raises(ValueError):
        epidemic.integrate(np.full(cfg.n, 2.0), x, cfg, 1.0)


def test_zero_infection_stays_zero():
    cfg = reference_config()
    traj = epidemic.integrate(np.zeros(cfg.n), uniform_state(cfg), cfg, 1.0)
    assert np.all(traj.I == 0.0)


def test_large_step_clamp_is_logged(caplog):
    cfg = reference_config()
    with caplog.at_level("WARNING"):
        traj = epidemic.integrate(np.full(cfg.n, 0.9), extreme_states(cfg)[0], cfg, 2.0, step=0.5)
    assert traj.max_clamp > 1e-9
    assert "clamped" in caplog.text


def test_stability_regime():
    assert epidemic.stability_regime(single(2.0, 1.0)) == "endemic"
    assert epidemic.stability_regime(single(0.5, 1.0)) == "disease-free"
    cfg = ModelConfig((1,), (1.0,), ((0.0, 0.9),), 2.0, 1.0)
    assert epidemic.stability_regime(cfg) == "mixed"
