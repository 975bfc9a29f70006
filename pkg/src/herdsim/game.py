"""Payoffs, payoff Jacobians, best responses and dominance analysis."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import epidemic
from .model import ModelConfig, SolverError


def payoff_from_eta(eta: np.ndarray, config: ModelConfig) -> np.ndarray:
    """``F = s r - (1 - s) eta`` per class."""
    s = config.class_strategy
    return s * config.reward - (1.0 - s) * np.asarray(eta, dtype=float)


@dataclass(frozen=True)
class Observation:
    """What players see at a broadcast.

    ``report`` is set when the broadcaster announces a link-infection
    probability instead of the true infection levels.
    """

    eta: np.ndarray
    report: float | None = None

    @classmethod
    def perfect(cls, I: np.ndarray) -> "Observation":
        return cls(np.asarray(I, dtype=float).copy())

    @classmethod
    def misreport(cls, theta_tilde: float, config: ModelConfig) -> "Observation":
        return cls(epidemic.steady_infection(theta_tilde, config), float(theta_tilde))


def payoff_steady(
    x: np.ndarray,
    config: ModelConfig,
    report: float | None = None,
    theta_bar: float | None = None,
) -> np.ndarray:
    """Payoffs when the broadcast happens at the epidemic steady state of ``x``.

    With ``report`` the players observe the infection levels implied by the
    announced link-infection probability rather than the true ones.
    """
    if report is not None:
        return payoff_from_eta(Observation.misreport(report, config).eta, config)
    if theta_bar is None:
        theta_bar = epidemic.steady_theta_fixed_point(x, config)
    return payoff_from_eta(epidemic.steady_infection(theta_bar, config), config)


def payoff_time_dependent(x: np.ndarray, I: np.ndarray, config: ModelConfig) -> np.ndarray:
    return payoff_from_eta(I, config)


def _theta_jacobian(theta_bar: float, x: np.ndarray, config: ModelConfig) -> float:
    th = config.theta
    return -float(np.dot(config.class_degree * x, th**2 / (config.gamma + th * theta_bar) ** 2)) / (
        config.mean_degree
    )


def payoff_gradient(
    x: np.ndarray, config: ModelConfig, theta_bar: float | None = None
) -> np.ndarray:
    """Analytic ``dF/dx`` at the endemic steady state (rank one).

    Raises:
        SolverError: in the disease-free regime, where the implicit-function
            argument breaks down. Fall back to finite differences there.
    """
    x = np.asarray(x, dtype=float)
    if theta_bar is None:
        theta_bar = epidemic.steady_theta_fixed_point(x, config)
    if theta_bar <= 1e-11:
        raise SolverError("payoff gradient undefined at a disease-free steady state")
    jac = _theta_jacobian(theta_bar, x, config)
    if abs(jac) < 1e-12:
        raise SolverError(f"degenerate steady-state Jacobian ({jac:.3g})")
    th, g = config.theta, config.gamma
    denom = g + th * theta_bar
    mu = (1.0 - config.class_strategy) * th / denom**2
    nu = config.class_degree * th / denom
    return (g / config.mean_degree / jac) * np.outer(mu, nu)


def tangent_directions(config: ModelConfig) -> list[tuple[int, int]]:
    """Pairs ``(a, b)`` of flat indices in the same population."""
    pairs = []
    for blk in config.blocks():
        for a in range(blk.start, blk.stop):
            for b in range(a + 1, blk.stop):
                pairs.append((a, b))
    return pairs


def finite_difference_gradient(
    x: np.ndarray, config: ModelConfig, h: float = 1e-6, payoff=None
) -> dict[tuple[int, int], np.ndarray]:
    """Central differences of the payoff along mass-conserving directions.

    Returns a map ``(a, b) -> dF/d(e_a - e_b)``. Moving mass between two
    classes of one population keeps the state on its scaled simplex; the
    step is shrunk near the boundary so the perturbed states stay feasible.
    """
    if payoff is None:
        payoff = payoff_steady
    x = np.asarray(x, dtype=float)
    out = {}
    for a, b in tangent_directions(config):
        room = min(x[a], x[b])
        step = h if room >= h else None
        if step is None:
            # one-sided toward the interior when a coordinate sits on the boundary
            e = np.zeros_like(x)
            e[a], e[b] = 1.0, -1.0
            if x[b] >= h:
                out[(a, b)] = (payoff(x + h * e, config) - payoff(x, config)) / h
            elif x[a] >= h:
                out[(a, b)] = (payoff(x, config) - payoff(x - h * e, config)) / h
            continue
        e = np.zeros_like(x)
        e[a], e[b] = 1.0, -1.0
        out[(a, b)] = (payoff(x + step * e, config) - payoff(x - step * e, config)) / (2 * step)
    return out


def time_dependent_gradient(
    I_t: np.ndarray, t: np.ndarray, config: ModelConfig
) -> np.ndarray:
    """Payoff Jacobian for broadcasts after an interval, from a stored trajectory.

    Integrates ``-(lambda / dbar) d c (1 - s_i)^2 (1 - I_i) I_j`` over the
    trajectory grid with the trapezoid rule.
    """
    one_minus_s = 1.0 - config.class_strategy
    deg = config.class_degree
    left = (one_minus_s**2)[None, :] * (1.0 - I_t)
    integrand = left[:, :, None] * I_t[:, None, :]
    integral = np.trapezoid(integrand, t, axis=0)
    return -(config.lam / config.mean_degree) * np.outer(deg, deg) * integral


def difference_matrix(k: int) -> np.ndarray:
    """``k x (k-1)`` matrix with ``-1`` on the diagonal and ``+1`` below it."""
    sigma = np.zeros((k, max(k - 1, 0)))
    for j in range(k - 1):
        sigma[j, j] = -1.0
        sigma[j + 1, j] = 1.0
    return sigma


@dataclass
class Certificate:
    passed: bool
    violations: list[tuple[int, int, int, int, float]] = field(default_factory=list)
    worst: float = -np.inf

    def __bool__(self) -> bool:
        return self.passed


def submodularity_certificate(
    DF: np.ndarray, config: ModelConfig, atol: float = 1e-10
) -> Certificate:
    """Check ``Sigma_d^T DF_dc Sigma_c <= atol`` entrywise for all block pairs.

    Violations are reported as ``(d, c, row, col, value)``.
    """
    blocks = config.blocks()
    sigmas = [difference_matrix(k) for k in config.sizes]
    violations = []
    worst = -np.inf
    for d, bd in enumerate(blocks):
        for c, bc in enumerate(blocks):
            prod = sigmas[d].T @ DF[bd, bc] @ sigmas[c]
            if prod.size == 0:
                continue
            worst = max(worst, float(prod.max()))
            for row, col in zip(*np.nonzero(prod > atol)):
                violations.append((d, c, int(row), int(col), float(prod[row, col])))
    return Certificate(not violations, violations, worst)


def best_response(F_block: np.ndarray, mass: float) -> np.ndarray:
    """All of the population's mass on the lowest-indexed payoff maximiser."""
    out = np.zeros(len(F_block))
    out[int(np.argmax(F_block))] = mass
    return out


def least_best_response(F: np.ndarray, config: ModelConfig) -> np.ndarray:
    out = np.zeros(config.n)
    for blk, m in zip(config.blocks(), config.masses):
        out[blk] = best_response(F[blk], m)
    return out


def regrets(x: np.ndarray, F: np.ndarray, config: ModelConfig) -> np.ndarray:
    """Per-population ``max_i F_i - (x . F) / m``; zero for empty populations."""
    out = np.zeros(config.n_populations)
    for d, (blk, m) in enumerate(zip(config.blocks(), config.masses)):
        if m > 0:
            out[d] = F[blk].max() - float(np.dot(x[blk], F[blk])) / m
    return out


class NashCheck(NamedTuple):
    ok: bool
    regret: np.ndarray
    payoff: np.ndarray

    def __bool__(self) -> bool:
        return self.ok


def is_nash(x: np.ndarray, config: ModelConfig, eps: float = 1e-8) -> NashCheck:
    x = np.asarray(x, dtype=float)
    F = payoff_steady(x, config)
    reg = regrets(x, F, config)
    ok = bool(reg.max(initial=0.0) <= eps)
    if ok:
        for blk, m in zip(config.blocks(), config.masses):
            used = x[blk] > eps * m
            if np.any(F[blk][used] < F[blk].max() - eps):
                ok = False
                break
    return NashCheck(ok, reg, F)


def gap(x: np.ndarray, F: np.ndarray, config: ModelConfig) -> float:
    """``sum_d m^d max_i F_i - x . F``; zero exactly at equilibria."""
    total = 0.0
    for blk, m in zip(config.blocks(), config.masses):
        total += m * F[blk].max() - float(np.dot(x[blk], F[blk]))
    return total


def common_strategies(config: ModelConfig) -> tuple[float, ...]:
    first = config.strategies[0]
    if any(S != first for S in config.strategies[1:]):
        raise ValueError("dominance analysis needs identical strategy sets across populations")
    return first


def critical_reward(config: ModelConfig) -> tuple[np.ndarray, float]:
    """Per-degree critical |r| above which the smallest strategy dominates, and their max."""
    s_min = common_strategies(config)[0]
    ratio = config.lam * np.asarray(config.degrees, dtype=float) * (1.0 - s_min) / config.gamma
    per_degree = 1.0 - 1.0 / (1.0 + ratio) ** 2
    return per_degree, float(per_degree.max())


def payoff_slope(s: np.ndarray, degree: float, theta: float, config: ModelConfig) -> np.ndarray:
    """Derivative in ``s`` of the continuous payoff extension at broadcast value ``theta``."""
    rho = config.lam * degree * (1.0 - np.asarray(s, dtype=float)) / config.gamma
    return config.reward + (2 * theta * rho + theta**2 * rho**2) / (1 + theta * rho) ** 2


def dominance_check(
    config: ModelConfig, report: float | None = None, grid: int = 1001
) -> float | None:
    """Return ``s_min`` if it is dominant for every population, else ``None``.

    Without a report the worst case over every possible broadcast is used:
    the slope increases with the broadcast value, so it is evaluated at 1.
    """
    S = common_strategies(config)
    theta = 1.0 if report is None else float(report)
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"report must lie in [0, 1], got {report}")
    s_grid = np.linspace(S[0], S[-1], grid)
    for d in config.degrees:
        if np.any(payoff_slope(s_grid, d, theta, config) > 0.0):
            return None
    return S[0]
