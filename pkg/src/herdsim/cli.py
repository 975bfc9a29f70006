"""Scenario-driven command line: ``herdsim scenario.json [--out DIR] [--seed N]``.

Exit codes: 0 success, 1 configuration error, 2 solver error, 3 I/O error.
Failures print a one-line JSON object on stderr.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import epidemic, export, game, learning, linearize
from .model import (
    ConfigError,
    HerdsimError,
    ModelConfig,
    SolverError,
    _schema_problems,
    check,
    extreme_states,
    parse_config,
    state_from_blocks,
    uniform_state,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
OUT_ENV = "HERDSIM_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3

_STATE = {
    "oneOf": [
        {"enum": ["min", "max", "uniform", "ne"]},
        {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
    ]
}
_INFECTION = {
    "oneOf": [
        {"type": "number", "minimum": 0, "maximum": 1},
        {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
    ]
}
_POS = {"type": "number", "exclusiveMinimum": 0}
_SCHEDULE = {
    "type": "object",
    "properties": {
        "mode": {"enum": ["steady", "exponential", "fixed"]},
        "interval": _POS,
        "rate": _POS,
        "delay": {"type": "number", "minimum": 0},
    },
    "required": ["mode"],
    "additionalProperties": False,
}


def _params(props: dict[str, Any]) -> dict[str, Any]:
    return {"type": "object", "properties": props, "additionalProperties": False}


PARAM_SCHEMAS: dict[str, dict[str, Any]] = {
    "steady": _params({"x": _STATE, "I0": _INFECTION, "horizon": _POS, "step": _POS}),
    "ne-brd": _params(
        {
            "x0": _STATE,
            "max_iter": {"type": "integer", "minimum": 1},
            "tol": _POS,
            "delta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        }
    ),
    "ne-opt": _params({"x0": _STATE, "max_iter": {"type": "integer", "minimum": 1}, "tol": _POS}),
    "simulate": _params(
        {
            "x0": _STATE,
            "I0": _INFECTION,
            "horizon": _POS,
            "output_step": _POS,
            "schedule": _SCHEDULE,
        }
    ),
    "two-peak": _params(
        {
            "x0": _STATE,
            "I0": _INFECTION,
            "horizon": _POS,
            "switch_time": {"type": ["number", "null"], "exclusiveMinimum": 0},
            "bias": {"type": "number", "minimum": 0, "maximum": 1},
            "toward": {"enum": ["low", "high"]},
            "output_step": _POS,
            "schedule": _SCHEDULE,
        }
    ),
    "carleman": _params(
        {
            "x": _STATE,
            "I0": _INFECTION,
            "horizon": _POS,
            "step": _POS,
            "order": {"type": "integer", "minimum": 1},
            "reset_period": {"type": ["number", "null"], "exclusiveMinimum": 0},
        }
    ),
    "network": _params({"x": _STATE, "threshold": {"type": "number", "minimum": 0}}),
    "sweep": _params(
        {
            "base": {"enum": ["steady", "ne-brd"]},
            "grid": {
                "type": "object",
                "properties": {k: {"type": "array", "items": {"type": "number"}} for k in ("lambda", "gamma", "reward", "tau")},
                "additionalProperties": False,
            },
            "x": _STATE,
        }
    ),
}

SCENARIO_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["schema_version", "command", "model"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "command": {"enum": sorted(PARAM_SCHEMAS)},
        "model": {"type": "object"},
        "params": {"type": "object"},
        "output": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}


class Scenario:
    """A parsed, validated scenario file."""

    def __init__(self, data: dict[str, Any], seed: int | None = None):
        problems = _schema_problems(data, SCENARIO_SCHEMA, prefix="")
        if problems:
            raise ConfigError(problems)
        self.command: str = data["command"]
        self.model: ModelConfig = parse_config(data["model"])
        self.params: dict[str, Any] = dict(data.get("params", {}))
        problems = _schema_problems(self.params, PARAM_SCHEMAS[self.command], prefix="params")
        if problems:
            raise ConfigError(problems)
        self.output: str | None = data.get("output")
        self.seed: int | None = seed if seed is not None else data.get("seed")
        schedule = self.params.get("schedule")
        if schedule and schedule["mode"] == "exponential" and self.seed is None:
            raise ConfigError("seed: required for exponential broadcast schedules")

    @classmethod
    def load(cls, path: str | Path, seed: int | None = None) -> "Scenario":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"scenario is not valid JSON: {exc}") from exc
        return cls(data, seed)


def resolve_state(spec: Any, config: ModelConfig) -> np.ndarray:
    x_min, x_max = extreme_states(config)
    if spec == "min":
        return x_min
    if spec == "max":
        return x_max
    if spec == "uniform":
        return uniform_state(config)
    if spec == "ne":
        trace = learning.brd_run(x_min, config)
        if not trace.converged:
            raise SolverError(f"could not reach an equilibrium for 'ne': {trace.message}")
        return trace.final
    return state_from_blocks(spec, config)


def resolve_infection(spec: Any, config: ModelConfig, default: float = 0.01) -> np.ndarray:
    if spec is None:
        spec = default
    I0 = np.asarray(spec, dtype=float)
    if I0.ndim == 0:
        return np.full(config.n, float(I0))
    if I0.shape != (config.n,):
        raise ConfigError(f"params.I0: expected {config.n} entries, got {I0.size}")
    return I0


def resolve_schedule(spec: dict[str, Any] | None, scenario: Scenario) -> learning.BroadcastSchedule:
    if spec is None:
        return learning.BroadcastSchedule("fixed", interval=0.15)
    mode = spec["mode"]
    rate = spec.get("rate", scenario.model.tau if mode == "exponential" else None)
    return learning.BroadcastSchedule(
        mode, interval=spec.get("interval"), rate=rate, delay=spec.get("delay", 0.0), seed=scenario.seed
    )


# --------------------------------------------------------------------------- commands


def cmd_steady(sc: Scenario, out: Path) -> str:
    cfg, p = sc.model, sc.params
    x = resolve_state(p.get("x", "uniform"), cfg)
    ss = epidemic.steady_state(x, cfg)
    dump = export.payoff_dump(x, cfg)
    dump.update(
        {"I_bar": ss.I_bar, "kind": ss.kind, "regime": epidemic.stability_regime(cfg), "x": export.blocks_of(x, cfg)}
    )
    export.write_json(out / "steady.json", dump)
    if "horizon" in p:
        traj = epidemic.integrate(resolve_infection(p.get("I0"), cfg), x, cfg, p["horizon"], p.get("step"))
        export.write_trajectory(out / "trajectory.csv", traj.t, traj.I, traj.theta, cfg)
    return f"steady: theta_bar={ss.theta_bar:.6g} ({ss.kind})"


def cmd_ne_brd(sc: Scenario, out: Path) -> str:
    cfg, p = sc.model, sc.params
    x0 = resolve_state(p.get("x0", "min"), cfg)
    tol = p.get("tol", 1e-8)
    trace = learning.brd_continuous(x0, cfg, p.get("delta", 1.0), p.get("max_iter", 1000), tol)
    export.write_learning_trace(out / "brd_trace.csv", trace, cfg)
    export.write_json(
        out / "ne_report.json",
        export.ne_report(trace.final, cfg, converged=trace.converged, iterations=len(trace.steps) - 1, message=trace.message),
    )
    if not trace.converged:
        raise SolverError(f"best-response dynamics did not converge: {trace.message}")
    F = game.payoff_steady(trace.final, cfg)
    return f"ne-brd: NE found in {len(trace.steps) - 1} iterations, gap={game.gap(trace.final, F, cfg):.3g}"


def cmd_ne_opt(sc: Scenario, out: Path) -> str:
    cfg, p = sc.model, sc.params
    x0 = resolve_state(p.get("x0", "uniform"), cfg)
    res = learning.ne_optimize(x0, cfg, tol=p.get("tol", 1e-8), max_iter=p.get("max_iter", 2000))
    export.write_learning_trace(out / "opt_trace.csv", res.trace, cfg)
    export.write_json(out / "ne_report.json", export.ne_report(res.x, cfg, converged=res.converged, status=res.status))
    if not res.converged:
        raise SolverError(f"gap minimisation stalled at G={res.objective:.3g} ({res.status})")
    return f"ne-opt: NE found, gap={res.objective:.3g}"


def cmd_simulate(sc: Scenario, out: Path) -> str:
    cfg, p = sc.model, sc.params
    x0 = resolve_state(p.get("x0", "min"), cfg)
    I0 = resolve_infection(p.get("I0"), cfg)
    schedule = resolve_schedule(p.get("schedule"), sc)
    tr = learning.coupled_simulate(x0, I0, cfg, schedule, p.get("horizon", 40.0), p.get("output_step", 0.1))
    export.write_trace(out / "trace.csv", tr.t, tr.x, tr.I, tr.theta, tr.event, cfg)
    export.write_json(out / "ne_report.json", export.ne_report(tr.final_x, cfg, broadcasts=int(tr.event.sum())))
    ok = game.is_nash(tr.final_x, cfg)
    return f"simulate: {int(tr.event.sum())} broadcasts, final state {'is' if ok else 'is not'} an NE"


def cmd_two_peak(sc: Scenario, out: Path) -> str:
    cfg, p = sc.model, sc.params
    res = learning.two_peak_scenario(
        cfg,
        switch_time=p.get("switch_time", 50.0),
        post_switch_x_bias=p.get("bias", 1.0),
        horizon=p.get("horizon", 100.0),
        toward=p.get("toward", "low"),
        schedule=resolve_schedule(p.get("schedule"), sc),
        x0=resolve_state(p.get("x0", "min"), cfg),
        I0=resolve_infection(p.get("I0"), cfg),
        output_step=p.get("output_step", 0.1),
    )
    tr = res.trace
    export.write_trace(out / "trace.csv", tr.t, tr.x, tr.I, tr.theta, tr.event, cfg)
    export.write_rows(out / "new_infections.csv", ["t", "new_infections"], zip(res.t, res.new_infections))
    export.write_json(
        out / "peaks.json",
        {"peak_times": res.peak_times, "peak_values": res.new_infections[res.peaks], "count": len(res.peaks)},
    )
    return f"two-peak: {len(res.peaks)} peaks at t={', '.join(f'{t:.2f}' for t in res.peak_times)}"


def cmd_carleman(sc: Scenario, out: Path) -> str:
    cfg, p = sc.model, sc.params
    x = resolve_state(p.get("x", "uniform"), cfg)
    I0 = resolve_infection(p.get("I0"), cfg)
    horizon, step = p.get("horizon", 2.0), p.get("step", 1e-3)
    system = linearize.carleman_build(x, cfg, p.get("order", 3))
    tr = linearize.carleman_integrate(I0, system, horizon, step, p.get("reset_period", 0.1))
    ref = epidemic.integrate(I0, x, cfg, horizon, step)
    wx = cfg.class_degree * x / cfg.mean_degree
    export.write_trajectory(out / "carleman.csv", tr.t, tr.I, tr.I @ wx, cfg)
    export.write_trajectory(out / "reference.csv", ref.t, ref.I, ref.theta, cfg)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(ref.I > 0, np.abs(tr.I - ref.I) / ref.I, 0.0)
    err = float(rel.max()) if ref.I.shape == tr.I.shape else float("nan")
    export.write_json(out / "carleman.json", {"order": system.order, "resets": tr.resets, "max_relative_error": err})
    return f"carleman: order {system.order}, max relative error {err:.3g}"


def cmd_network(sc: Scenario, out: Path) -> str:
    cfg, p = sc.model, sc.params
    x = resolve_state(p.get("x", "ne"), cfg)
    edges = linearize.export_equivalent_network(x, cfg, p.get("threshold", 1e-9))
    export.write_edges(out / "network.csv", edges)
    net = linearize.equivalent_adjacency(x, cfg)
    pair = linearize.dominant_eigenpair(net, cfg)
    export.write_json(
        out / "spectrum.json",
        {
            "kappa_tilde": pair.kappa_tilde,
            "kappa": pair.kappa,
            "v1": pair.vector,
            "residual": pair.residual,
            "rank": linearize.numeric_rank(net.A_tilde),
            "x": export.blocks_of(x, cfg),
        },
    )
    return f"network: {len(edges)} edges, kappa_1={pair.kappa:.6g}"


SWEEP_KEYS = {"lambda": "lam", "gamma": "gamma", "reward": "reward", "tau": "tau"}
SWEEP_HEADER = ["point", "lambda", "gamma", "reward", "tau", "status", "theta_bar", "ne_profile", "gap", "regime", "dominance", "error"]


def sweep_points(grid: dict[str, list[float]]) -> list[dict[str, float]]:
    """Cartesian product of the grid; an empty grid or any empty axis gives no points."""
    keys = [k for k in SWEEP_KEYS if k in grid]
    if not keys or any(len(grid[k]) == 0 for k in keys):
        return []
    return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]


def _sweep_classify(cfg: ModelConfig) -> dict[str, Any]:
    try:
        dominance = "s_min" if game.dominance_check(cfg) is not None else "none"
    except ValueError:
        dominance = "n/a"
    return {"regime": epidemic.stability_regime(cfg), "dominance": dominance}


def _sweep_solve(base: str, cfg: ModelConfig, x_spec: Any) -> dict[str, Any]:
    if base == "ne-brd":
        trace = learning.brd_run(resolve_state(x_spec or "min", cfg), cfg)
        if not trace.converged:
            raise SolverError(trace.message)
        x = trace.final
    else:
        x = resolve_state(x_spec or "uniform", cfg)
    theta_bar = epidemic.steady_theta_fixed_point(x, cfg)
    F = game.payoff_steady(x, cfg, theta_bar=theta_bar)
    return {
        "theta_bar": theta_bar,
        "ne_profile": json.dumps(export.blocks_of(x, cfg)),
        "gap": game.gap(x, F, cfg),
    }


def cmd_sweep(sc: Scenario, out: Path) -> str:
    p = sc.params
    base = p.get("base", "ne-brd")
    points = sweep_points(p.get("grid", {}))
    rows = []
    failures = 0
    for k, point in enumerate(points):
        changes = {SWEEP_KEYS[key]: v for key, v in point.items()}
        row: dict[str, Any] = {"point": str(k), "status": "ok", "error": ""}
        try:
            cfg = sc.model.replace(**changes)
            check(cfg)
            row.update({name: getattr(cfg, attr) for name, attr in SWEEP_KEYS.items()})
            row.update(_sweep_classify(cfg))
            row.update(_sweep_solve(base, cfg, p.get("x")))
        except (HerdsimError, ValueError) as exc:
            failures += 1
            for name, attr in SWEEP_KEYS.items():
                row.setdefault(name, point.get(name, getattr(sc.model, attr)))
            row.update(status="failed", error=str(exc))
        rows.append([row.get(h, "") for h in SWEEP_HEADER])
    export.write_rows(out / "sweep.csv", SWEEP_HEADER, rows)
    return f"sweep: {len(points)} points, {failures} failed"


COMMANDS: dict[str, Callable[[Scenario, Path], str]] = {
    "steady": cmd_steady,
    "ne-brd": cmd_ne_brd,
    "ne-opt": cmd_ne_opt,
    "simulate": cmd_simulate,
    "two-peak": cmd_two_peak,
    "carleman": cmd_carleman,
    "network": cmd_network,
    "sweep": cmd_sweep,
}


def output_dir(cli_out: str | None, scenario: Scenario) -> Path:
    """``--out`` wins, then the environment variable, then the scenario, then ``herdsim_out``."""
    return Path(cli_out or os.environ.get(OUT_ENV) or scenario.output or "herdsim_out")


def _fail(code: int, kind: str, exc: BaseException) -> int:
    payload = {"error": kind, "exit_code": code, "message": str(exc)}
    if isinstance(exc, ConfigError):
        payload["problems"] = exc.problems
    print(json.dumps(payload), file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="herdsim", description="Run an epidemic-game scenario.")
    parser.add_argument("scenario", help="path to the scenario JSON file")
    parser.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the scenario)")
    parser.add_argument("--seed", type=int, help="RNG seed (overrides the scenario)")
    return parser


def run(path: str | Path, out: str | None = None, seed: int | None = None) -> int:
    try:
        scenario = Scenario.load(path, seed)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except OSError as exc:
        return _fail(EXIT_IO, "io", exc)
    try:
        target = output_dir(out, scenario)
        target.mkdir(parents=True, exist_ok=True)
        summary = COMMANDS[scenario.command](scenario, target)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except SolverError as exc:
        return _fail(EXIT_SOLVER, "solver", exc)
    except OSError as exc:
        return _fail(EXIT_IO, "io", exc)
    print(summary)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return run(args.scenario, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
