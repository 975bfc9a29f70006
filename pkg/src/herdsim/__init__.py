"""Coupled epidemic and population-game toolkit."""

from .model import (
    ClassIndex,
    ConfigError,
    HerdsimError,
    ModelConfig,
    SolverError,
    average_degree,
    extreme_states,
    validate,
)

__all__ = [
    "ClassIndex",
    "ConfigError",
    "HerdsimError",
    "ModelConfig",
    "SolverError",
    "average_degree",
    "extreme_states",
    "validate",
]
