"""Scenario and experiment files: YAML with SI units spelled in the key names.

Scenario schema (``lanecoop-scenario/1``)::

    schema: lanecoop-scenario/1
    limits:     {u_min_mps2, u_max_mps2, v_min_mps, v_max_mps}
    safety:     {epsilon_m, phi_s}
    disruption: {gamma, t_avg_s, desired_speed_mps, gamma_t_per_s}
    vehicles:
      - {role: uncontrolled, position_m: ..., speed_mps: ...}
      - {role: ego, ...}
      - {role: front, ...}          # optional
      - {role: cooperator, ...}     # listed front to back
      - {role: back, ...}           # optional

Experiment schema (``lanecoop-experiment/1``) carries the benchmark grid
(seeds, cooperator counts, methods, desired-speed range) plus optional
overrides for every module configuration; see ``data/default_experiment.yaml``
for the fully spelled-out default.
"""

from __future__ import annotations

import dataclasses
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .baselines import BaselineConfig
from .bench import ExperimentConfig, GeneratorConfig
from .coordination import SolverConfig
from .disruption import DisruptionConfig
from .model import ActuationLimits, SafetyParams, Scenario, VehicleState
from .planner import PlannerConfig

SCENARIO_SCHEMA = "lanecoop-scenario/1"
EXPERIMENT_SCHEMA = "lanecoop-experiment/1"


class ScenarioFormatError(Exception):
    """Malformed scenario or experiment file; message names the offending key."""


def _require(mapping: dict, key: str, context: str) -> Any:
    if key not in mapping:
        raise ScenarioFormatError(f"{context}: missing key {key!r}")
    return mapping[key]


def _number(mapping: dict, key: str, context: str) -> float:
    value = _require(mapping, key, context)
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ScenarioFormatError(f"{context}: {key!r} must be a number, got {value!r}")
    return float(value)


def _load_yaml(path: Path) -> dict:
    try:
        with path.open() as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ScenarioFormatError(f"{path}: file not found")
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise ScenarioFormatError(f"{path}{where}: invalid YAML ({err})")
    if not isinstance(data, dict):
        raise ScenarioFormatError(f"{path}: top level must be a mapping")
    return data


def _parse_limits(section: dict, context: str) -> ActuationLimits:
    try:
        return ActuationLimits(
            u_min=_number(section, "u_min_mps2", context),
            u_max=_number(section, "u_max_mps2", context),
            v_min=_number(section, "v_min_mps", context),
            v_max=_number(section, "v_max_mps", context),
        )
    except ValueError as err:
        raise ScenarioFormatError(f"{context}: {err}")


def _parse_safety(section: dict, context: str) -> SafetyParams:
    try:
        return SafetyParams(
            epsilon=_number(section, "epsilon_m", context),
            phi=_number(section, "phi_s", context),
        )
    except ValueError as err:
        raise ScenarioFormatError(f"{context}: {err}")


def load_scenario(path: str | Path) -> tuple[Scenario, DisruptionConfig]:
    """Parse a scenario file into the model types plus the metric config."""
    path = Path(path)
    data = _load_yaml(path)
    if data.get("schema") != SCENARIO_SCHEMA:
        raise ScenarioFormatError(
            f"{path}: schema must be {SCENARIO_SCHEMA!r}, got {data.get('schema')!r}"
        )
    limits = _parse_limits(_require(data, "limits", str(path)), f"{path}: limits")
    safety = _parse_safety(_require(data, "safety", str(path)), f"{path}: safety")

    dis = _require(data, "disruption", str(path))
    ctx = f"{path}: disruption"
    dcfg = DisruptionConfig(
        v_d=_number(dis, "desired_speed_mps", ctx),
        gamma=_number(dis, "gamma", ctx),
        t_avg=_number(dis, "t_avg_s", ctx),
        gamma_t=_number(dis, "gamma_t_per_s", ctx),
    )

    vehicles = _require(data, "vehicles", str(path))
    if not isinstance(vehicles, list) or not vehicles:
        raise ScenarioFormatError(f"{path}: vehicles must be a non-empty list")
    ego = uncontrolled = front = back = None
    cooperators: list[VehicleState] = []
    for i, entry in enumerate(vehicles):
        ctx = f"{path}: vehicles[{i}]"
        if not isinstance(entry, dict):
            raise ScenarioFormatError(f"{ctx}: must be a mapping")
        role = _require(entry, "role", ctx)
        state = VehicleState(
            position=_number(entry, "position_m", ctx),
            speed=_number(entry, "speed_mps", ctx),
        )
        if role == "ego":
            if ego is not None:
                raise ScenarioFormatError(f"{ctx}: duplicate ego")
            ego = state
        elif role == "uncontrolled":
            if uncontrolled is not None:
                raise ScenarioFormatError(f"{ctx}: duplicate uncontrolled vehicle")
            uncontrolled = state
        elif role == "front":
            front = state
        elif role == "back":
            back = state
        elif role == "cooperator":
            cooperators.append(state)
        else:
            raise ScenarioFormatError(f"{ctx}: unknown role {role!r}")
    if ego is None or uncontrolled is None:
        raise ScenarioFormatError(f"{path}: need one ego and one uncontrolled vehicle")
    scenario = Scenario(
        ego=ego,
        uncontrolled=uncontrolled,
        cooperators=tuple(cooperators),
        front=front,
        back=back,
        limits=limits,
        safety=safety,
    )
    return scenario, dcfg


def dump_scenario(scenario: Scenario, dcfg: DisruptionConfig, path: str | Path) -> None:
    vehicles = [
        {"role": "uncontrolled", "position_m": scenario.uncontrolled.position,
         "speed_mps": scenario.uncontrolled.speed},
        {"role": "ego", "position_m": scenario.ego.position, "speed_mps": scenario.ego.speed},
    ]
    if scenario.front is not None:
        vehicles.append({"role": "front", "position_m": scenario.front.position,
                         "speed_mps": scenario.front.speed})
    vehicles.extend(
        {"role": "cooperator", "position_m": c.position, "speed_mps": c.speed}
        for c in scenario.cooperators
    )
    if scenario.back is not None:
        vehicles.append({"role": "back", "position_m": scenario.back.position,
                         "speed_mps": scenario.back.speed})
    payload = {
        "schema": SCENARIO_SCHEMA,
        "limits": {
            "u_min_mps2": scenario.limits.u_min,
            "u_max_mps2": scenario.limits.u_max,
            "v_min_mps": scenario.limits.v_min,
            "v_max_mps": scenario.limits.v_max,
        },
        "safety": {"epsilon_m": scenario.safety.epsilon, "phi_s": scenario.safety.phi},
        "disruption": {
            "gamma": dcfg.gamma,
            "t_avg_s": dcfg.t_avg,
            "desired_speed_mps": dcfg.v_d,
            "gamma_t_per_s": dcfg.gamma_t,
        },
        "vehicles": vehicles,
    }
    with Path(path).open("w") as fh:
        yaml.safe_dump(payload, fh, sort_keys=False)


# ---------------------------------------------------------------------------
# Experiment files

_GENERATOR_KEYS = {
    "ego_speed_mps": "ego_speed",
    "u_speed_mps": "u_speed",
    "ego_gap_slack_m": "ego_gap_slack",
    "ego_gap_jitter_m": "ego_gap_jitter",
    "coop_speed_jitter_mps": "coop_speed_jitter",
    "coop_gap_jitter_m": "coop_gap_jitter",
    "anchor_time_s": "anchor_time",
    "anchor_jitter_m": "anchor_jitter",
    "max_attempts": "max_attempts",
}
_BASELINE_KEYS = {
    "alpha": "alpha",
    "d_th": "d_th",
    "d_th_global": "d_th_global",
    "relaxation": "relaxation",
    "max_iters": "max_iters",
    "variant": "variant",
    "terminal_speed_mode": "terminal_speed_mode",
    "speed_tolerance_mps": "speed_tolerance",
    "terminal_speed_weight": "terminal_speed_weight",
    "step1_nodes": "step1_nodes",
    "step1_grid": "step1_grid",
    "step1_refine": "step1_refine",
    "t_lb_s": "t_lb",
    "t_max_s": "t_max",
}
_SOLVER_KEYS = {
    "t_lb_s": "t_lb",
    "t_max_s": "t_max",
    "grid_points": "grid_points",
    "refine_iters": "refine_iters",
    "feas_tol": "feas_tol",
    "stat_tol": "stat_tol",
    "multi_start": "multi_start",
    "big_m_m": "big_m",
}
_PLANNER_KEYS = {
    "nodes": "nodes",
    "delta_x_m2": "delta_x",
    "delta_v_m2_per_s2": "delta_v",
    "stat_tol": "stat_tol",
    "feas_tol": "feas_tol",
}


def _parse_section(section: dict, key_map: dict[str, str], cls, base, context: str):
    overrides = {}
    for key, value in section.items():
        if key not in key_map:
            raise ScenarioFormatError(f"{context}: unknown key {key!r}")
        overrides[key_map[key]] = value
    try:
        return dataclasses.replace(base, **overrides)
    except (TypeError, ValueError) as err:
        raise ScenarioFormatError(f"{context}: {err}")


def load_experiment(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    data = _load_yaml(path)
    if data.get("schema") != EXPERIMENT_SCHEMA:
        raise ScenarioFormatError(
            f"{path}: schema must be {EXPERIMENT_SCHEMA!r}, got {data.get('schema')!r}"
        )
    base = ExperimentConfig()
    kwargs: dict[str, Any] = {}

    seeds = data.get("seeds", list(base.seeds))
    if isinstance(seeds, dict):
        count = int(_number(seeds, "count", f"{path}: seeds"))
        start = int(seeds.get("start", 0))
        kwargs["seeds"] = tuple(range(start, start + count))
    elif isinstance(seeds, list):
        kwargs["seeds"] = tuple(int(s) for s in seeds)
    else:
        raise ScenarioFormatError(f"{path}: seeds must be a list or {{count, start}}")

    kwargs["cooperator_counts"] = tuple(int(c) for c in data.get(
        "cooperator_counts", base.cooperator_counts))
    kwargs["methods"] = tuple(data.get("methods", base.methods))
    if "v_d_range_mps" in data:
        lo, hi = data["v_d_range_mps"]
        kwargs["v_d_range"] = (float(lo), float(hi))
    if "gamma" in data:
        kwargs["gamma"] = float(data["gamma"])
    if "t_avg_s" in data:
        kwargs["t_avg"] = float(data["t_avg_s"])
    if "workers" in data:
        kwargs["workers"] = int(data["workers"])
    if "limits" in data:
        kwargs["limits"] = _parse_limits(data["limits"], f"{path}: limits")
    if "safety" in data:
        kwargs["safety"] = _parse_safety(data["safety"], f"{path}: safety")
    if "generator" in data:
        kwargs["generator"] = _parse_section(
            data["generator"], _GENERATOR_KEYS, GeneratorConfig, base.generator,
            f"{path}: generator")
    if "baseline" in data:
        kwargs["baseline"] = _parse_section(
            data["baseline"], _BASELINE_KEYS, BaselineConfig, base.baseline, f"{path}: baseline")
    if "solver" in data:
        kwargs["solver"] = _parse_section(
            data["solver"], _SOLVER_KEYS, SolverConfig, base.solver, f"{path}: solver")
    if "planner" in data:
        kwargs["planner"] = _parse_section(
            data["planner"], _PLANNER_KEYS, PlannerConfig, base.planner, f"{path}: planner")

    known = {"schema", "seeds", "cooperator_counts", "methods", "v_d_range_mps", "gamma",
             "t_avg_s", "workers", "limits", "safety", "generator", "baseline", "solver",
             "planner"}
    for key in data:
        if key not in known:
            raise ScenarioFormatError(f"{path}: unknown key {key!r}")
    try:
        return dataclasses.replace(base, **kwargs)
    except ValueError as err:
        raise ScenarioFormatError(f"{path}: {err}")


def default_experiment_text() -> str:
    """The bundled experiment file reproducing the benchmark's default setup."""
    return resources.files("lanecoop").joinpath("data/default_experiment.yaml").read_text()


def load_default_experiment() -> ExperimentConfig:
    data = resources.files("lanecoop").joinpath("data/default_experiment.yaml")
    with resources.as_file(data) as path:
        return load_experiment(path)
