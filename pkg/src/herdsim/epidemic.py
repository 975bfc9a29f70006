"""Mean-field SI dynamics with recovery, steady states and time integration."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import optimize

from .model import ModelConfig, SolverError

log = logging.getLogger(__name__)

Regime = Literal["disease-free", "endemic", "mixed"]

CLAMP_REPORT = 1e-9


def theta_of(I: np.ndarray, x: np.ndarray, config: ModelConfig) -> float:
    """Probability that a random link ends at an infected node."""
    val = float(np.dot(config.class_degree * x, I)) / config.mean_degree
    return min(max(val, 0.0), 1.0)


def derivative(I: np.ndarray, x: np.ndarray, config: ModelConfig) -> np.ndarray:
    I = np.asarray(I, dtype=float)
    th = float(np.dot(config.class_degree * x, I)) / config.mean_degree
    return -config.gamma * I + config.theta * (1.0 - I) * th


def default_step(config: ModelConfig) -> float:
    return 0.01 / max(config.gamma, config.lam * max(config.degrees))


@dataclass(frozen=True)
class EpidemicState:
    I: np.ndarray
    theta: float


@dataclass
class Trajectory:
    """Stored integration output; ``I`` has one row per entry of ``t``."""

    t: np.ndarray
    I: np.ndarray
    theta: np.ndarray
    max_clamp: float = 0.0

    @property
    def final(self) -> EpidemicState:
        return EpidemicState(self.I[-1].copy(), float(self.theta[-1]))


def rk4_step(f, y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def advance(
    I: np.ndarray, x: np.ndarray, config: ModelConfig, duration: float, step: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Integrate over ``duration`` with steps no larger than ``step``.

    Returns the internal time offsets, the states at those offsets (first row
    is the input), and the largest clamp correction applied.
    """
    n_steps = max(1, math.ceil(duration / step - 1e-12))
    h = duration / n_steps
    wx = config.class_degree * x / config.mean_degree
    th_rate, gamma = config.theta, config.gamma

    def f(y):
        return -gamma * y + th_rate * (1.0 - y) * np.dot(wx, y)

    out = np.empty((n_steps + 1, I.size))
    out[0] = I
    y = np.array(I, dtype=float)
    worst = 0.0
    for k in range(n_steps):
        y = rk4_step(f, y, h)
        clipped = np.clip(y, 0.0, 1.0)
        worst = max(worst, float(np.max(np.abs(clipped - y))))
        y = clipped
        out[k + 1] = y
    return np.arange(n_steps + 1) * h, out, wx, worst


def integrate(
    I0: np.ndarray,
    x: np.ndarray,
    config: ModelConfig,
    horizon: float,
    step: float | None = None,
) -> Trajectory:
    """Fixed-step fourth-order Runge-Kutta integration of the SI system.

    Every state is clamped to [0, 1]; a clamp larger than 1e-9 is logged as a
    sign that ``step`` is too large.
    """
    if step is None:
        step = default_step(config)
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    I0 = np.asarray(I0, dtype=float)
    if np.any(I0 < 0) or np.any(I0 > 1):
        raise ValueError("initial infection fractions must lie in [0, 1]")
    x = np.asarray(x, dtype=float)
    t, I, wx, worst = advance(I0, x, config, horizon, step)
    if worst > CLAMP_REPORT:
        log.warning("integration clamped states by %.3g; step %.3g may be too large", worst, step)
    return Trajectory(t=t, I=I, theta=np.clip(I @ wx, 0.0, 1.0), max_clamp=worst)


def fixed_point_map(z: float, x: np.ndarray, config: ModelConfig) -> float:
    th = config.theta
    return float(np.dot(config.class_degree * x, th * z / (config.gamma + th * z))) / config.mean_degree


def psi(z: float, x: np.ndarray, config: ModelConfig) -> float:
    th = config.theta
    return float(np.dot(config.class_degree * x, th / (config.gamma + th * z)))


def steady_theta_fixed_point(
    x: np.ndarray, config: ModelConfig, tol: float = 1e-12, max_iter: int = 10_000
) -> float:
    """Steady link-infection probability by iterating the steady-state map from 1.

    Returns 0.0 when the iteration settles below ``tol`` (disease-free).
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    wx = config.class_degree * np.asarray(x, dtype=float) / config.mean_degree
    th, gamma = config.theta, config.gamma
    z = 1.0
    for _ in range(max_iter):
        z_new = float(np.dot(wx, th * z / (gamma + th * z)))
        if abs(z_new - z) < tol:
            return z_new if z_new >= tol else 0.0
        z = z_new
    raise SolverError(f"steady-state iteration did not converge in {max_iter} iterations (last {z:.3g})")


def steady_theta_bisection(x: np.ndarray, config: ModelConfig, tol: float = 1e-12) -> float:
    """Root of ``psi(z) = mean degree`` on [0, 1] by bisection."""
    x = np.asarray(x, dtype=float)
    target = config.mean_degree

    def g(z):
        return psi(z, x, config) - target

    g0 = g(0.0)
    if g0 == 0.0:
        return 0.0
    if g0 < 0.0:
        raise SolverError(
            "no positive steady state to bracket: psi(0) < mean degree (endemic condition fails)"
        )
    return float(optimize.bisect(g, 0.0, 1.0, xtol=tol))


def steady_infection(theta_bar: float, config: ModelConfig) -> np.ndarray:
    if not 0.0 <= theta_bar <= 1.0:
        raise ValueError(f"theta_bar must lie in [0, 1], got {theta_bar}")
    th = config.theta
    return th * theta_bar / (config.gamma + th * theta_bar)


@dataclass(frozen=True)
class SteadyState:
    theta_bar: float
    I_bar: np.ndarray
    kind: Literal["disease-free", "endemic"]


def steady_state(x: np.ndarray, config: ModelConfig, tol: float = 1e-12) -> SteadyState:
    theta_bar = steady_theta_fixed_point(x, config, tol=tol)
    if theta_bar > 10 * tol:
        return SteadyState(theta_bar, steady_infection(theta_bar, config), "endemic")
    return SteadyState(0.0, np.zeros(config.n), "disease-free")


def stability_regime(config: ModelConfig) -> Regime:
    """Classify by the per-class threshold ratios.

    ``mixed`` means some classes are above and some below threshold; no
    stability statement is available in that case.
    """
    ratio = config.threshold_ratio
    if np.all(ratio < 1.0):
        return "disease-free"
    if np.all(ratio >= 1.0):
        return "endemic"
    return "mixed"
