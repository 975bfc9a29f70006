"""Model configuration, validation and class-index bookkeeping.

Every other module works on flat vectors of length ``n = sum_d n^d`` whose
entries are ordered degree-major, strategy-minor: all strategies of the first
population, then all strategies of the second, and so on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Sequence

import jsonschema
import numpy as np

MASS_TOL = 1e-12
STATE_MASS_TOL = 1e-10


class HerdsimError(Exception):
    """Base class for all package errors."""


class ConfigError(HerdsimError, ValueError):
    """Raised when a configuration or scenario violates its schema or invariants."""

    def __init__(self, problems: Sequence[str] | str):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class SolverError(HerdsimError, RuntimeError):
    """Raised when a numerical routine cannot produce a trustworthy answer."""


@dataclass(frozen=True)
class ModelConfig:
    """Parameters of the coupled epidemic game.

    Attributes:
        degrees: Degree of each population (positive integers).
        masses: Population masses ``m^d``; must sum to one.
        strategies: Per-population strictly increasing inactivity levels in [0, 1].
        lam: Contagion rate.
        gamma: Recovery rate.
        reward: Relative reward of social inactivity (non-positive).
        tau: Broadcast rate.
    """

    degrees: tuple[int, ...]
    masses: tuple[float, ...]
    strategies: tuple[tuple[float, ...], ...]
    lam: float
    gamma: float
    reward: float = -0.1
    tau: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "degrees", tuple(int(d) for d in self.degrees))
        object.__setattr__(self, "masses", tuple(float(m) for m in self.masses))
        object.__setattr__(
            self, "strategies", tuple(tuple(float(s) for s in S) for S in self.strategies)
        )

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModelConfig":
        """Build a config from the JSON layout (``lambda`` rather than ``lam``)."""
        problems = _schema_problems(data, CONFIG_SCHEMA, prefix="")
        if problems:
            raise ConfigError(problems)
        return cls(
            degrees=data["degrees"],
            masses=data["masses"],
            strategies=data["strategies"],
            lam=data["lambda"],
            gamma=data["gamma"],
            reward=data.get("reward", -0.1),
            tau=data.get("tau", 1.0),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "degrees": list(self.degrees),
            "masses": list(self.masses),
            "strategies": [list(S) for S in self.strategies],
            "lambda": self.lam,
            "gamma": self.gamma,
            "reward": self.reward,
            "tau": self.tau,
        }

    def replace(self, **changes: Any) -> "ModelConfig":
        data = {
            "degrees": self.degrees,
            "masses": self.masses,
            "strategies": self.strategies,
            "lam": self.lam,
            "gamma": self.gamma,
            "reward": self.reward,
            "tau": self.tau,
        }
        data.update(changes)
        return ModelConfig(**data)

    # Flat per-class views. Cached; the dataclass is frozen so they never go stale.

    @property
    def n_populations(self) -> int:
        return len(self.degrees)

    @cached_property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(S) for S in self.strategies)

    @cached_property
    def index(self) -> "ClassIndex":
        return ClassIndex(self.sizes)

    @property
    def n(self) -> int:
        return self.index.n

    @cached_property
    def class_degree(self) -> np.ndarray:
        return np.repeat(np.asarray(self.degrees, dtype=float), self.sizes)

    @cached_property
    def class_strategy(self) -> np.ndarray:
        return np.concatenate([np.asarray(S, dtype=float) for S in self.strategies])

    @cached_property
    def class_population(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_populations), self.sizes)

    @cached_property
    def class_mass(self) -> np.ndarray:
        """Mass ``m^d`` of the population owning each class."""
        return np.asarray(self.masses, dtype=float)[self.class_population]

    @cached_property
    def theta(self) -> np.ndarray:
        """Per-class contagion intensity ``lambda * d * (1 - s)``."""
        return self.lam * self.class_degree * (1.0 - self.class_strategy)

    @cached_property
    def threshold_ratio(self) -> np.ndarray:
        """Per-class ratio ``lambda d (1 - s) / gamma`` deciding the stability regime."""
        return self.theta / self.gamma

    @property
    def mean_degree(self) -> float:
        return average_degree(self)

    def blocks(self) -> list[slice]:
        return self.index.blocks


@dataclass(frozen=True)
class ClassIndex:
    """Bijection between (population, strategy) pairs and flat indices."""

    sizes: tuple[int, ...]
    offsets: tuple[int, ...] = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "offsets", tuple(int(o) for o in np.cumsum((0,) + self.sizes[:-1])))

    @property
    def n(self) -> int:
        return int(sum(self.sizes))

    @property
    def blocks(self) -> list[slice]:
        return [slice(o, o + k) for o, k in zip(self.offsets, self.sizes)]

    def flatten(self, d: int, i: int) -> int:
        """Flat index of strategy ``i`` of population ``d`` (both zero-based)."""
        if not 0 <= d < len(self.sizes):
            raise IndexError(f"population {d} out of range 0..{len(self.sizes) - 1}")
        if not 0 <= i < self.sizes[d]:
            raise IndexError(f"strategy {i} out of range for population {d} (size {self.sizes[d]})")
        return self.offsets[d] + i

    def unflatten(self, k: int) -> tuple[int, int]:
        if not 0 <= k < self.n:
            raise IndexError(f"flat index {k} out of range 0..{self.n - 1}")
        d = int(np.searchsorted(self.offsets, k, side="right")) - 1
        return d, k - self.offsets[d]

    def labels(self, degrees: Sequence[int]) -> list[str]:
        """``"<degree>_<strategy>"`` labels with one-based strategy numbers."""
        return [f"{degrees[d]}_{i + 1}" for d in range(len(self.sizes)) for i in range(self.sizes[d])]


def validate(config: ModelConfig) -> list[str]:
    """Return one message per violated invariant; an empty list means valid."""
    problems: list[str] = []
    D = len(config.degrees)
    if D == 0:
        problems.append("at least one population is required")
    if len(config.masses) != D:
        problems.append(f"masses has {len(config.masses)} entries but there are {D} degrees")
    if len(config.strategies) != D:
        problems.append(f"strategies has {len(config.strategies)} sets but there are {D} degrees")
    for d in config.degrees:
        if d < 1:
            problems.append(f"degree {d} is not a positive integer")
    for k, m in enumerate(config.masses):
        if not (m >= 0.0) or not math.isfinite(m):
            problems.append(f"mass of population {k} is negative ({m})")
    total = math.fsum(config.masses)
    if abs(total - 1.0) > MASS_TOL:
        problems.append(f"mass sum {total:g} != 1")
    for k, S in enumerate(config.strategies):
        if len(S) == 0:
            problems.append(f"strategy set {k} is empty")
            continue
        if any(not (0.0 <= s <= 1.0) for s in S):
            problems.append(f"strategy set {k} has entries outside [0, 1]")
        if any(b <= a for a, b in zip(S, S[1:])):
            problems.append(f"strategy set {k}: strategies not strictly increasing")
    if not config.lam > 0:
        problems.append(f"lambda must be positive (got {config.lam})")
    if not config.gamma > 0:
        problems.append(f"gamma must be positive (got {config.gamma})")
    if not config.reward <= 0:
        problems.append(f"reward must be non-positive (got {config.reward})")
    if not config.tau > 0:
        problems.append(f"tau must be positive (got {config.tau})")
    return problems


def check(config: ModelConfig) -> ModelConfig:
    problems = validate(config)
    if problems:
        raise ConfigError(problems)
    return config


def average_degree(config: ModelConfig) -> float:
    return float(np.dot(config.degrees, config.masses))


def extreme_states(config: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Social states with every population on its first / last strategy."""
    x_min = np.zeros(config.n)
    x_max = np.zeros(config.n)
    for blk, m in zip(config.blocks(), config.masses):
        x_min[blk.start] = m
        x_max[blk.stop - 1] = m
    return x_min, x_max


def uniform_state(config: ModelConfig) -> np.ndarray:
    return config.class_mass / np.repeat(config.sizes, config.sizes)


def check_state(x: np.ndarray, config: ModelConfig, tol: float = STATE_MASS_TOL) -> np.ndarray:
    """Validate a social state and return it as a float array."""
    x = np.asarray(x, dtype=float)
    if x.shape != (config.n,):
        raise ConfigError(f"social state has shape {x.shape}, expected ({config.n},)")
    if np.any(x < -tol):
        raise ConfigError("social state has negative entries")
    for d, (blk, m) in enumerate(zip(config.blocks(), config.masses)):
        if abs(x[blk].sum() - m) > tol:
            raise ConfigError(f"population {d} block sums to {x[blk].sum():g}, expected mass {m:g}")
    return x


def state_from_blocks(blocks: Sequence[Sequence[float]], config: ModelConfig) -> np.ndarray:
    """Concatenate per-population blocks and validate the result."""
    if len(blocks) != config.n_populations:
        raise ConfigError(f"expected {config.n_populations} population blocks, got {len(blocks)}")
    return check_state(np.concatenate([np.asarray(b, dtype=float) for b in blocks]), config)


def load_config(path: str | Path) -> ModelConfig:
    with open(path) as fh:
        data = json.load(fh)
    return ModelConfig.from_dict(data)


CONFIG_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["degrees", "masses", "strategies", "lambda", "gamma"],
    "properties": {
        "degrees": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "masses": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "strategies": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "array",
                "minItems": 1,
                "items": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "lambda": {"type": "number", "exclusiveMinimum": 0},
        "gamma": {"type": "number", "exclusiveMinimum": 0},
        "reward": {"type": "number", "maximum": 0},
        "tau": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
}


def _schema_problems(data: Any, schema: dict[str, Any], prefix: str) -> list[str]:
    validator = jsonschema.Draft7Validator(schema)
    problems = []
    for err in sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path)):
        path = prefix + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
        problems.append(f"{path.lstrip('.') or '<root>'}: {err.message}")
    return problems


def parse_config(data: Any, prefix: str = "model") -> ModelConfig:
    """Schema-check ``data``, build the config, then check the model invariants."""
    problems = _schema_problems(data, CONFIG_SCHEMA, prefix=prefix)
    if problems:
        raise ConfigError(problems)
    config = ModelConfig.from_dict(data)
    problems = validate(config)
    if problems:
        raise ConfigError([f"{prefix}: {p}" for p in problems])
    return config
