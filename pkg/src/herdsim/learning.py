"""Best-response learning, the coupled broadcast simulator and the gap-function solver."""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
from scipy.special import logsumexp

from . import epidemic, game
from .model import ConfigError, ModelConfig, SolverError, check_state, extreme_states

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LearningStep:
    index: float
    x: np.ndarray
    theta: float
    I: np.ndarray
    regret: float


@dataclass
class LearningTrace:
    steps: list[LearningStep] = field(default_factory=list)
    converged: bool = False
    cycled: bool = False
    message: str = ""

    @property
    def final(self) -> np.ndarray:
        return self.steps[-1].x

    @property
    def states(self) -> np.ndarray:
        return np.array([s.x for s in self.steps])

    @property
    def regrets(self) -> np.ndarray:
        return np.array([s.regret for s in self.steps])


def brd_step(
    x: np.ndarray,
    config: ModelConfig,
    eta: np.ndarray | None = None,
    delta: float = 1.0,
    sequential: bool = False,
) -> np.ndarray:
    """One best-response revision.

    With ``eta`` the payoffs use those observed infection levels (time-dependent
    mode); otherwise the steady state of ``x`` is used. ``sequential`` revises
    populations one after another, each seeing the earlier revisions.
    """
    x = np.asarray(x, dtype=float)
    if not sequential:
        F = game.payoff_steady(x, config) if eta is None else game.payoff_from_eta(eta, config)
        br = game.least_best_response(F, config)
        return br if delta == 1.0 else delta * br + (1.0 - delta) * x
    out = x.copy()
    for blk, m in zip(config.blocks(), config.masses):
        F = game.payoff_steady(out, config) if eta is None else game.payoff_from_eta(eta, config)
        br = game.best_response(F[blk], m)
        out[blk] = br if delta == 1.0 else delta * br + (1.0 - delta) * out[blk]
    return out


def _record(trace: LearningTrace, k: float, x: np.ndarray, config: ModelConfig) -> np.ndarray:
    ss = epidemic.steady_state(x, config)
    F = game.payoff_steady(x, config, theta_bar=ss.theta_bar)
    reg = game.regrets(x, F, config)
    trace.steps.append(LearningStep(k, x.copy(), ss.theta_bar, ss.I_bar, float(reg.max(initial=0.0))))
    return F


def brd_continuous(
    x0: np.ndarray,
    config: ModelConfig,
    delta: float = 1.0,
    max_iter: int = 1000,
    tol: float = 1e-8,
    sequential: bool = False,
) -> LearningTrace:
    """Damped best-response iteration ``x <- delta BR(x) + (1 - delta) x``.

    ``delta = 1`` is plain best-response dynamics. Iteration stops once no
    mass moves, once the state passes ``is_nash`` at ``tol`` (for
    ``delta < 1``), or when a pure iteration revisits an earlier state.
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    x = check_state(x0, config).copy()
    trace = LearningTrace()
    seen = {x.tobytes()}
    _record(trace, 0, x, config)
    for k in range(1, max_iter + 1):
        if delta < 1.0 and trace.steps[-1].regret <= tol and game.is_nash(x, config, eps=tol):
            break
        x_new = brd_step(x, config, delta=delta, sequential=sequential)
        moved = float(np.max(np.abs(x_new - x)))
        x = x_new
        if moved == 0.0:
            break
        _record(trace, k, x, config)
        if delta == 1.0:
            key = x.tobytes()
            if key in seen:
                trace.cycled = True
                trace.message = f"best responses cycle (revisited a state at iteration {k})"
                return trace
            seen.add(key)
    else:
        trace.message = f"max_iter={max_iter} reached with regret {trace.steps[-1].regret:.3g}"
        return trace
    trace.converged = bool(game.is_nash(trace.final, config, eps=tol))
    trace.message = "converged" if trace.converged else "stopped at a non-equilibrium state"
    return trace


def brd_run(
    x0: np.ndarray,
    config: ModelConfig,
    max_iter: int = 1000,
    tol: float = 1e-8,
    sequential: bool = False,
) -> LearningTrace:
    """Best-response dynamics with least-element selection."""
    return brd_continuous(x0, config, 1.0, max_iter, tol, sequential)


# --------------------------------------------------------------------------- broadcasts


@dataclass(frozen=True)
class BroadcastSchedule:
    """When broadcasts happen and what they report.

    mode:
        ``steady``: players see the steady state of the current social state.
        ``exponential``: inter-arrival times drawn at ``rate`` (needs ``seed``).
        ``fixed``: one broadcast every ``interval``.
    delay: a broadcast at ``t`` reports ``I(t - delay)`` (``I(0)`` before ``delay``).
    """

    mode: Literal["steady", "exponential", "fixed"] = "fixed"
    interval: float | None = None
    rate: float | None = None
    delay: float = 0.0
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.mode == "exponential":
            if self.rate is None or not self.rate > 0:
                raise ConfigError("exponential schedule needs a positive rate")
            if self.seed is None:
                raise ConfigError("exponential schedule needs a seed")
        elif self.mode == "fixed":
            if self.interval is None or not self.interval > 0:
                raise ConfigError("fixed schedule needs a positive interval")
        elif self.mode == "steady":
            if self.interval is not None and not self.interval > 0:
                raise ConfigError("steady schedule interval must be positive")
        else:
            raise ConfigError(f"unknown schedule mode {self.mode!r}")
        if not self.delay >= 0:
            raise ConfigError("delay must be non-negative")

    def event_times(self, horizon: float) -> np.ndarray:
        if self.mode == "exponential":
            rng = np.random.default_rng(self.seed)
            times = []
            t = 0.0
            while True:
                t += rng.exponential(1.0 / self.rate)
                if t > horizon:
                    break
                times.append(t)
            return np.array(times)
        step = self.interval if self.interval is not None else 1.0
        k = int(math.floor(horizon / step + 1e-9))
        return step * np.arange(1, k + 1)


@dataclass
class CoupledTrace:
    t: np.ndarray
    x: np.ndarray
    I: np.ndarray
    theta: np.ndarray
    event: np.ndarray

    @property
    def final_x(self) -> np.ndarray:
        return self.x[-1]

    @property
    def event_states(self) -> np.ndarray:
        return self.x[self.event]


class _History:
    """Piecewise-stored infection trajectory for delayed lookups."""

    def __init__(self, I0: np.ndarray):
        self.I0 = I0.copy()
        self.starts: list[float] = []
        self.segments: list[tuple[np.ndarray, np.ndarray]] = []

    def add(self, t: np.ndarray, I: np.ndarray) -> None:
        self.starts.append(float(t[0]))
        self.segments.append((t, I))

    def at(self, t: float) -> np.ndarray:
        if t <= 0.0 or not self.segments:
            return self.I0.copy()
        k = max(bisect.bisect_right(self.starts, t) - 1, 0)
        ts, Is = self.segments[k]
        if t >= ts[-1]:
            return Is[-1].copy()
        j = int(np.searchsorted(ts, t, side="right")) - 1
        w = (t - ts[j]) / (ts[j + 1] - ts[j])
        return (1.0 - w) * Is[j] + w * Is[j + 1]


def coupled_simulate(
    x0: np.ndarray,
    I0: np.ndarray,
    config: ModelConfig,
    schedule: BroadcastSchedule,
    horizon: float,
    output_step: float = 0.1,
    step: float | None = None,
    interventions: dict[float, Callable[[np.ndarray], np.ndarray]] | None = None,
    freeze_after: float | None = None,
) -> CoupledTrace:
    """Integrate the epidemic between broadcasts and revise strategies at each one.

    Rows are stored on the ``output_step`` grid and at every broadcast (flagged).
    ``interventions`` maps times to functions that replace the social state
    from outside the game; broadcasts after ``freeze_after`` no longer
    trigger revisions.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    x = check_state(x0, config).copy()
    I = np.asarray(I0, dtype=float).copy()
    if step is None:
        step = epidemic.default_step(config)
    interventions = dict(interventions or {})

    grid = np.arange(0.0, horizon + 1e-9, output_step)
    events = schedule.event_times(horizon)
    marks: dict[float, int] = {}
    for t in grid:
        marks[round(float(t), 12)] = 0
    for t in events:
        marks[round(float(t), 12)] = 1
    for t in interventions:
        if 0.0 < t <= horizon:
            marks.setdefault(round(float(t), 12), 0)
    times = sorted(marks)
    act_at = {round(float(t), 12): f for t, f in interventions.items()}

    history = _History(I)
    rows_t, rows_x, rows_I, rows_th, rows_ev = [], [], [], [], []
    t_now = 0.0
    for t in times:
        if t > t_now:
            ts, Is, _, _ = epidemic.advance(I, x, config, t - t_now, step)
            history.add(t_now + ts, Is)
            I = Is[-1].copy()
            t_now = t
        if t in act_at:
            x = check_state(act_at[t](x), config).copy()
        is_event = marks[t] == 1 and t > 0.0
        if is_event and (freeze_after is None or t <= freeze_after):
            if schedule.mode == "steady":
                x = brd_step(x, config)
            else:
                reported = history.at(t - schedule.delay) if schedule.delay > 0 else I
                x = brd_step(x, config, eta=reported)
        rows_t.append(t)
        rows_x.append(x.copy())
        rows_I.append(I.copy())
        rows_th.append(epidemic.theta_of(I, x, config))
        rows_ev.append(is_event)
    return CoupledTrace(
        t=np.array(rows_t),
        x=np.array(rows_x),
        I=np.array(rows_I),
        theta=np.array(rows_th),
        event=np.array(rows_ev, dtype=bool),
    )


def new_infection_proxy(trace: CoupledTrace, config: ModelConfig) -> np.ndarray:
    """Inflow term of the SI system summed over classes with weights ``x d``."""
    inflow = config.theta[None, :] * (1.0 - trace.I) * trace.theta[:, None]
    return np.sum(trace.x * config.class_degree[None, :] * inflow, axis=1)


def detect_peaks(t: np.ndarray, y: np.ndarray, min_separation: float) -> list[int]:
    """Strict local maxima at least ``min_separation`` after the previous kept one."""
    peaks: list[int] = []
    for k in range(1, len(y) - 1):
        if y[k] > y[k - 1] and y[k] > y[k + 1]:
            if not peaks or t[k] - t[peaks[-1]] >= min_separation:
                peaks.append(k)
    return peaks


@dataclass
class TwoPeakResult:
    t: np.ndarray
    new_infections: np.ndarray
    peaks: list[int]
    trace: CoupledTrace

    @property
    def peak_times(self) -> list[float]:
        return [float(self.t[k]) for k in self.peaks]


def two_peak_scenario(
    config: ModelConfig,
    switch_time: float | None = 50.0,
    post_switch_x_bias: float = 1.0,
    horizon: float = 100.0,
    toward: Literal["low", "high"] = "low",
    schedule: BroadcastSchedule | None = None,
    x0: np.ndarray | None = None,
    I0: float | np.ndarray = 0.01,
    output_step: float = 0.1,
    min_separation: float = 0.05,
) -> TwoPeakResult:
    """Coupled run with an exogenous behaviour change at ``switch_time``.

    At the switch a fraction ``post_switch_x_bias`` of every population moves
    to its first strategy (``toward="low"``) or its last (``"high"``), and the
    populations keep that behaviour for the rest of the run. ``switch_time=None``
    gives the control run.
    """
    if switch_time is not None and not switch_time < horizon:
        raise ValueError("switch_time must be before the horizon")
    if not 0.0 <= post_switch_x_bias <= 1.0:
        raise ValueError("post_switch_x_bias must lie in [0, 1]")
    if schedule is None:
        schedule = BroadcastSchedule("fixed", interval=0.15)
    x_min, x_max = extreme_states(config)
    if x0 is None:
        x0 = x_min
    I0 = np.broadcast_to(np.asarray(I0, dtype=float), (config.n,)).copy()

    interventions = None
    if switch_time is not None:
        target = x_min if toward == "low" else x_max

        def switch(x: np.ndarray) -> np.ndarray:
            return post_switch_x_bias * target + (1.0 - post_switch_x_bias) * x

        interventions = {switch_time: switch}
    trace = coupled_simulate(
        x0, I0, config, schedule, horizon, output_step,
        interventions=interventions, freeze_after=switch_time,
    )
    y = new_infection_proxy(trace, config)
    peaks = detect_peaks(trace.t, y, min_separation * horizon)
    return TwoPeakResult(trace.t, y, peaks, trace)


# --------------------------------------------------------------------------- gap optimiser


def project_scaled_simplex(v: np.ndarray, mass: float) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{z >= 0, sum z = mass}``."""
    if mass <= 0:
        return np.zeros_like(v)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - mass
    ks = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / ks > 0)[0][-1]
    shift = css[rho] / (rho + 1.0)
    return np.maximum(v - shift, 0.0)


def project_state(v: np.ndarray, config: ModelConfig) -> np.ndarray:
    out = np.empty_like(v)
    for blk, m in zip(config.blocks(), config.masses):
        out[blk] = project_scaled_simplex(v[blk], m)
    return out


def _jacobian(x: np.ndarray, config: ModelConfig, theta_bar: float) -> np.ndarray:
    try:
        return game.payoff_gradient(x, config, theta_bar=theta_bar)
    except SolverError:
        h = 1e-6
        cols = []
        for k in range(config.n):
            e = np.zeros(config.n)
            e[k] = h
            cols.append((game.payoff_steady(x + e, config) - game.payoff_steady(x - e, config)) / (2 * h))
        return np.array(cols).T


def smoothed_gap(x: np.ndarray, F: np.ndarray, config: ModelConfig, temperature: float) -> float:
    total = 0.0
    for blk, m in zip(config.blocks(), config.masses):
        total += m * temperature * logsumexp(F[blk] / temperature) - float(np.dot(x[blk], F[blk]))
    return total


@dataclass
class NEResult:
    x: np.ndarray
    y: np.ndarray
    objective: float
    trace: LearningTrace
    converged: bool
    status: str


def ne_optimize(
    x0: np.ndarray,
    config: ModelConfig,
    tol: float = 1e-8,
    max_iter: int = 2000,
    temperature: float = 1.0,
    halve_every: int = 50,
    min_temperature: float = 1e-4,
) -> NEResult:
    """Minimise the equilibrium gap over the product of scaled simplices.

    The per-population max is smoothed by a log-sum-exp whose temperature is
    halved every ``halve_every`` iterations; steps are projected gradient
    steps with Armijo backtracking on the smoothed objective. A final gap at
    or below ``tol`` certifies an equilibrium. The problem is nonconvex, so a
    stall above ``tol`` is reported as a stationary point only.
    """
    x = project_state(check_state(x0, config), config)
    trace = LearningTrace()
    T = temperature
    lr = 1.0
    status = "max_iter"
    stall = 0
    for it in range(max_iter + 1):
        if it and it % halve_every == 0:
            T = max(T / 2.0, min_temperature)
        theta_bar = epidemic.steady_theta_fixed_point(x, config)
        F = game.payoff_steady(x, config, theta_bar=theta_bar)
        G = game.gap(x, F, config)
        reg = game.regrets(x, F, config)
        trace.steps.append(
            LearningStep(it, x.copy(), theta_bar, epidemic.steady_infection(theta_bar, config), float(reg.max()))
        )
        if G <= tol:
            status = "converged"
            break
        if it == max_iter:
            break
        DF = _jacobian(x, config, theta_bar)
        w = np.empty_like(x)
        for blk, m in zip(config.blocks(), config.masses):
            z = F[blk] / T
            w[blk] = m * np.exp(z - logsumexp(z))
        grad = DF.T @ (w - x) - F
        obj = smoothed_gap(x, F, config, T)
        lr = min(lr * 2.0, 10.0)
        while True:
            cand = project_state(x - lr * grad, config)
            F_c = game.payoff_steady(cand, config)
            decrease = float(np.dot(grad, x - cand))
            if smoothed_gap(cand, F_c, config, T) <= obj - 1e-4 * decrease or lr < 1e-12:
                break
            lr *= 0.5
        if np.max(np.abs(cand - x)) < 1e-15:
            stall += 1
            if T <= min_temperature and stall > 3:
                status = "stationary"
                break
        else:
            stall = 0
        x = cand
    F = game.payoff_steady(x, config)
    y = np.array([F[blk].max() for blk in config.blocks()])
    G = game.gap(x, F, config)
    converged = G <= tol
    trace.converged = converged
    if not converged:
        status = "stationary" if status == "stationary" else status
        log.info("gap solver stopped at G=%.3g (%s); a local stationary point, not an equilibrium", G, status)
    trace.message = status
    return NEResult(x, y, G, trace, converged, status)
