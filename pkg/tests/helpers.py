"""Random configuration generators shared by the test modules."""

from __future__ import annotations

import numpy as np

from herdsim.model import ModelConfig

S_CAP = 0.6

REFERENCE = dict(
    degrees=(3, 2),
    masses=(0.8498, 0.1502),
    strategies=((0.1, 0.3, 0.5), (0.3, 0.6)),
    lam=4.0,
    gamma=0.9,
    reward=-0.1,
)


def reference_config() -> ModelConfig:
    return ModelConfig(**REFERENCE)


def _strategy_set(rng: np.random.Generator, k: int, s_cap: float) -> tuple[float, ...]:
    while True:
        s = np.sort(rng.uniform(0.0, s_cap, size=k))
        if k == 1 or np.min(np.diff(s)) > 0.02:
            return tuple(float(v) for v in s)


def random_config(
    rng: np.random.Generator,
    regime: str = "endemic",
    max_populations: int = 3,
    max_strategies: int = 4,
    common: bool = False,
    reward: tuple[float, float] = (-1.0, 0.0),
) -> ModelConfig:
    """Draw a configuration in the requested stability regime.

    Endemic draws keep every threshold ratio at or above 1.5 and disease-free
    draws keep every ratio at or below 0.7, so convergence to the steady
    state happens on the time scales the tests use. Degrees lie in 1..4 and
    strategies in [0, 0.6], which keeps the fastest class rate near 40 gamma.
    """
    D = int(rng.integers(1, max_populations + 1))
    degrees = tuple(int(d) for d in np.sort(rng.choice(np.arange(1, 5), size=D, replace=False)))
    masses = rng.dirichlet(np.ones(D))
    masses = masses / masses.sum()
    masses[-1] = 1.0 - masses[:-1].sum()
    if common:
        S = _strategy_set(rng, int(rng.integers(1, max_strategies + 1)), S_CAP)
        strategies = tuple(S for _ in range(D))
    else:
        strategies = tuple(
            _strategy_set(rng, int(rng.integers(1, max_strategies + 1)), S_CAP) for _ in range(D)
        )
    gamma = float(rng.uniform(0.5, 1.5))
    if regime == "endemic":
        weakest = min(d * (1 - S[-1]) for d, S in zip(degrees, strategies))
        lam = gamma * rng.uniform(1.5, 4.0) / weakest
    elif regime == "disease-free":
        strongest = max(d * (1 - S[0]) for d, S in zip(degrees, strategies))
        lam = gamma * rng.uniform(0.2, 0.7) / strongest
    else:
        raise ValueError(regime)
    return ModelConfig(
        degrees=degrees,
        masses=tuple(masses),
        strategies=strategies,
        lam=float(lam),
        gamma=gamma,
        reward=float(rng.uniform(*reward)),
    )


def random_state(rng: np.random.Generator, config: ModelConfig) -> np.ndarray:
    x = np.empty(config.n)
    for blk, m, k in zip(config.blocks(), config.masses, config.sizes):
        x[blk] = m * rng.dirichlet(np.ones(k))
    return x


def small_rate_config(rng: np.random.Generator, max_classes: int = 4) -> ModelConfig:
    """Instances on the scale of the single-class ``lambda=2, gamma=1`` reference.

    Degrees in 1..3, lambda in [1, 3], gamma in [0.5, 1.5] and at most
    ``max_classes`` classes. Used where a fixed reset period must resolve the
    dynamics.
    """
    while True:
        D = int(rng.integers(1, 3))
        degrees = tuple(int(d) for d in np.sort(rng.choice(np.arange(1, 4), size=D, replace=False)))
        sizes = [int(rng.integers(1, 3)) for _ in range(D)]
        if sum(sizes) <= max_classes:
            break
    masses = rng.dirichlet(np.ones(D))
    masses[-1] = 1.0 - masses[:-1].sum()
    return ModelConfig(
        degrees=degrees,
        masses=tuple(masses),
        strategies=tuple(_strategy_set(rng, k, S_CAP) for k in sizes),
        lam=float(rng.uniform(1.0, 3.0)),
        gamma=float(rng.uniform(0.5, 1.5)),
        reward=float(rng.uniform(-1.0, 0.0)),
    )


def stable_step(config: ModelConfig) -> float:
    """RK4 step resolving the fastest class rate with a wide stability margin."""
    return 0.1 / (float(config.theta.max()) + config.gamma)
