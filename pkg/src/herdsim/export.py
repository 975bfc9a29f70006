"""CSV and JSON writers with stable headers."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import epidemic, game
from .model import ModelConfig, SolverError


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def class_labels(config: ModelConfig) -> list[str]:
    return config.index.labels(config.degrees)


def trajectory_header(config: ModelConfig) -> list[str]:
    return ["t", *(f"I_{lab}" for lab in class_labels(config)), "theta"]


def trace_header(config: ModelConfig) -> list[str]:
    labels = class_labels(config)
    return ["t", *(f"x_{lab}" for lab in labels), *(f"I_{lab}" for lab in labels), "theta", "event_flag"]


def write_rows(path: Path, header: Sequence[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    return path


def write_trajectory(path: Path, t: np.ndarray, I: np.ndarray, theta: np.ndarray, config: ModelConfig) -> Path:
    rows = (
        [tk, *Ik, th] for tk, Ik, th in zip(t, I, theta)
    )
    return write_rows(path, trajectory_header(config), rows)


def write_trace(
    path: Path,
    t: np.ndarray,
    x: np.ndarray,
    I: np.ndarray,
    theta: np.ndarray,
    event: np.ndarray,
    config: ModelConfig,
) -> Path:
    rows = ([tk, *xk, *Ik, th, str(int(ev))] for tk, xk, Ik, th, ev in zip(t, x, I, theta, event))
    return write_rows(path, trace_header(config), rows)


def write_learning_trace(path: Path, trace, config: ModelConfig) -> Path:
    """Learning iterations in the trace schema; ``t`` is the iteration index."""
    steps = trace.steps
    return write_trace(
        path,
        np.array([s.index for s in steps], dtype=float),
        np.array([s.x for s in steps]),
        np.array([s.I for s in steps]),
        np.array([s.theta for s in steps]),
        np.ones(len(steps), dtype=bool),
        config,
    )


def write_edges(path: Path, edges: Sequence[tuple[str, str, float]]) -> Path:
    return write_rows(path, ["src_class", "dst_class", "weight"], ([a, b, w] for a, b, w in edges))


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def write_json(path: Path, payload: dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def blocks_of(x: np.ndarray, config: ModelConfig) -> list[list[float]]:
    return [x[blk].tolist() for blk in config.blocks()]


def ne_report(x: np.ndarray, config: ModelConfig, **extra: Any) -> dict[str, Any]:
    """NE report: ``x_star``, ``y_star`` (per-population max payoff), gap and regrets."""
    F = game.payoff_steady(x, config)
    report = {
        "x_star": blocks_of(x, config),
        "y_star": [float(F[blk].max()) for blk in config.blocks()],
        "gap": game.gap(x, F, config),
        "regrets": game.regrets(x, F, config),
        "is_nash": bool(game.is_nash(x, config)),
    }
    report.update(extra)
    return report


def payoff_dump(x: np.ndarray, config: ModelConfig) -> dict[str, Any]:
    """Payoffs, Jacobian, steady link-infection probability and certificate verdict."""
    theta_bar = epidemic.steady_theta_fixed_point(x, config)
    F = game.payoff_steady(x, config, theta_bar=theta_bar)
    try:
        DF = game.payoff_gradient(x, config, theta_bar=theta_bar)
        cert = game.submodularity_certificate(DF, config)
        verdict = {"passed": cert.passed, "worst": cert.worst, "violations": cert.violations}
    except SolverError as exc:
        DF = None
        verdict = {"passed": None, "reason": str(exc)}
    return {
        "F": F,
        "DF": DF,
        "theta_bar": theta_bar,
        "regrets": game.regrets(x, F, config),
        "certificate": verdict,
    }
