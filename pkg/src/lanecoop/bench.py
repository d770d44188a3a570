"""Seeded scenario generation, method execution, and aggregate reporting.

A benchmark cell is one (seed, cooperator count) scenario solved by each
selected method. Generation is deterministic per (seed, m); aggregation is a
fold over sorted keys, so metric columns are bit-identical across re-runs and
worker counts. Wall times are the only non-deterministic outputs.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .baselines import BaselineConfig, IterationLimitExceeded, Step1Infeasible, run_iterative
from .coordination import (
    CoordinationInfeasible,
    CoordinationSolverFailure,
    SolverConfig,
    TerminalPlan,
    unified_plan_candidates,
)
from .disruption import DisruptionConfig, report_from_states
from .model import (
    DEFAULT_LIMITS,
    DEFAULT_SAFETY,
    ActuationLimits,
    SafetyParams,
    Scenario,
    VehicleState,
    scenario_violations,
)
from .planner import (
    PlannerConfig,
    PlannerInfeasible,
    SolverFailure,
    Trajectory,
    fast_lane_plan_labels,
    plan_all,
    safety_audit,
)

log = logging.getLogger(__name__)

ALL_METHODS = ("baseline-position", "baseline-full", "pa1", "pa2")
RESULTS_SCHEMA = "lanecoop-results/1"


@dataclass(frozen=True)
class GeneratorConfig:
    """Placement rules for the seeded scenarios.

    The ego starts behind the slow vehicle with a slack above the minimum
    safe gap large enough to admit short maneuvers that end at the desired
    speed while still honoring the terminal headway. Cooperator speeds are
    jittered around the desired flow speed and sorted non-increasing front to
    back so that non-cooperating constant-speed vehicles never drift into a
    rear-end violation; gaps get a jitter above the safety minimum. The
    platoon is anchored so its middle overtakes the ego around the typical
    maneuver horizon, which makes interior merge slots the common case.
    """

    ego_speed: float = 23.0
    u_speed: float = 20.0
    ego_gap_slack: float = 32.0
    ego_gap_jitter: float = 10.0
    coop_speed_jitter: float = 2.0
    coop_gap_jitter: float = 25.0
    anchor_time: float = 2.4
    anchor_jitter: float = 10.0
    max_attempts: int = 32


@dataclass(frozen=True)
class ExperimentConfig:
    seeds: tuple[int, ...] = tuple(range(24))
    cooperator_counts: tuple[int, ...] = (3, 4, 5, 6)
    methods: tuple[str, ...] = ALL_METHODS
    v_d_range: tuple[float, float] = (25.0, 35.0)
    gamma: float = 0.5
    t_avg: float = 2.0
    limits: ActuationLimits = DEFAULT_LIMITS
    safety: SafetyParams = DEFAULT_SAFETY
    generator: GeneratorConfig = GeneratorConfig()
    baseline: BaselineConfig = BaselineConfig()
    solver: SolverConfig = SolverConfig()
    planner: PlannerConfig = PlannerConfig()
    workers: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "seeds", tuple(self.seeds))
        object.__setattr__(self, "cooperator_counts", tuple(self.cooperator_counts))
        object.__setattr__(self, "methods", tuple(self.methods))
        for method in self.methods:
            if method not in ALL_METHODS:
                raise ValueError(f"unknown method {method!r}")
        if not self.seeds:
            raise ValueError("need at least one seed")

    @property
    def gamma_t(self) -> float:
        return 1.0 / self.solver.t_max


@dataclass(frozen=True)
class BenchCase:
    seed: int
    m: int
    scenario: Scenario
    v_d: float
    dcfg: DisruptionConfig


def generate_case(seed: int, m: int, config: ExperimentConfig) -> BenchCase:
    """Deterministic scenario plus metric configuration for one cell."""
    if m < 0:
        raise ValueError("cooperator count must be non-negative")
    gen = config.generator
    lim, safety = config.limits, config.safety
    rng = np.random.default_rng([seed, m])
    for _ in range(gen.max_attempts):
        v_d = float(rng.uniform(*config.v_d_range))
        ego = VehicleState(position=0.0, speed=gen.ego_speed)
        gap0 = safety.min_gap(gen.ego_speed) + gen.ego_gap_slack + float(
            rng.uniform(0.0, gen.ego_gap_jitter)
        )
        u_veh = VehicleState(position=ego.position + gap0, speed=gen.u_speed)

        speeds = v_d + rng.uniform(-gen.coop_speed_jitter, gen.coop_speed_jitter, size=m)
        speeds = np.clip(speeds, lim.v_min, lim.v_max)
        speeds = np.sort(speeds)[::-1]
        gaps = [
            safety.min_gap(float(speeds[i + 1])) + float(rng.uniform(0.0, gen.coop_gap_jitter))
            for i in range(m - 1)
        ]
        span = float(sum(gaps))
        mid = (gen.ego_speed - v_d) * gen.anchor_time + float(
            rng.uniform(-gen.anchor_jitter, gen.anchor_jitter)
        )
        positions = [mid + span / 2.0]
        for g in gaps:
            positions.append(positions[-1] - g)
        cooperators = tuple(
            VehicleState(position=positions[i], speed=float(speeds[i])) for i in range(m)
        )
        scenario = Scenario(
            ego=ego, uncontrolled=u_veh, cooperators=cooperators, limits=lim, safety=safety
        )
        if not scenario_violations(scenario):
            dcfg = DisruptionConfig(
                v_d=v_d, gamma=config.gamma, t_avg=config.t_avg, gamma_t=config.gamma_t
            )
            return BenchCase(seed=seed, m=m, scenario=scenario, v_d=v_d, dcfg=dcfg)
    raise RuntimeError(f"could not generate a valid scenario for seed={seed}, m={m}")


def generate_scenario(seed: int, m: int, config: ExperimentConfig = ExperimentConfig()) -> Scenario:
    return generate_case(seed, m, config).scenario


@dataclass
class MethodReport:
    seed: int
    m: int
    method: str
    feasible: bool
    t_f_star: float = math.nan
    pair_disruption: float = math.nan
    global_disruption: float = math.nan
    n_iter: int = 0
    t_iter_avg: float = math.nan
    min_gap_slack: float = math.nan
    max_terminal_dx2: float = math.nan
    max_terminal_dv2: float = math.nan
    trajectories: str = ""
    error: str = ""


@dataclass
class RunRecord:
    report: MethodReport
    plan: Optional[TerminalPlan] = None
    trajectory_set: Optional[list[Trajectory]] = None
    labels: Optional[list[str]] = None


def _terminal_errors(plan: TerminalPlan, trajs: list[Trajectory]) -> tuple[float, float]:
    targets = list(plan.cooperator_terminals[: plan.slot.slot])
    targets.append(plan.ego_terminal)
    targets.extend(plan.cooperator_terminals[plan.slot.slot :])
    dx2 = max(
        (traj.positions[-1] - tgt.position) ** 2 for traj, tgt in zip(trajs, targets)
    )
    dv2 = max((traj.speeds[-1] - tgt.speed) ** 2 for traj, tgt in zip(trajs, targets))
    return float(dx2), float(dv2)


def run_cell(case: BenchCase, method: str, config: ExperimentConfig) -> RunRecord:
    """Execute one method on one scenario; failures become data, not raises."""
    report = MethodReport(seed=case.seed, m=case.m, method=method, feasible=False)
    try:
        if method == "pa2":
            tic = time.perf_counter()
            candidates = unified_plan_candidates(case.scenario, case.dcfg, config.solver)
            solve_time = time.perf_counter() - tic
            plan = trajs = None
            last_err: Exception | None = None
            for candidate in candidates:
                try:
                    trajs = plan_all(candidate, case.scenario, config.planner)
                    plan = candidate
                    break
                except PlannerInfeasible as err:
                    last_err = err
            if plan is None or trajs is None:
                assert last_err is not None
                raise last_err
            n_iter = 1
            iter_avg = solve_time
        else:
            result = run_iterative(
                case.scenario,
                case.dcfg,
                config.baseline,
                method=method,
                solver_cfg=config.solver,
                planner_cfg=config.planner,
            )
            plan, trajs = result.plan, result.trajectories
            n_iter = result.n_iter
            iter_avg = float(np.mean(result.iter_times))
    except (
        CoordinationInfeasible,
        CoordinationSolverFailure,
        PlannerInfeasible,
        SolverFailure,
        IterationLimitExceeded,
        Step1Infeasible,
    ) as err:
        report.error = f"{type(err).__name__}: {err}"
        return RunRecord(report=report)
    except Exception as err:  # record, never abort the suite
        log.exception("run failed for seed=%d m=%d method=%s", case.seed, case.m, method)
        report.error = f"{type(err).__name__}: {err}"
        return RunRecord(report=report)

    dx2, dv2 = _terminal_errors(plan, trajs)
    report.feasible = True
    report.t_f_star = plan.t_f
    report.pair_disruption = plan.report.pair
    report.global_disruption = plan.report.global_total
    report.n_iter = n_iter
    report.t_iter_avg = iter_avg
    report.min_gap_slack = safety_audit(trajs, plan.slot.slot, case.scenario)
    report.max_terminal_dx2 = dx2
    report.max_terminal_dv2 = dv2
    labels = fast_lane_plan_labels(case.m, plan.slot.slot)
    return RunRecord(report=report, plan=plan, trajectory_set=trajs, labels=labels)


@dataclass
class AggregateRow:
    m: int
    method: str
    t_f_star: float
    pair_disruption: float
    global_disruption: float
    n_iter: float
    t_iter_avg: float
    feasible_runs: int
    total_runs: int


def aggregate_reports(reports: list[MethodReport]) -> list[AggregateRow]:
    keys = sorted({(r.m, r.method) for r in reports})
    rows = []
    for m, method in keys:
        cell = [r for r in reports if r.m == m and r.method == method]
        ok = [r for r in cell if r.feasible]
        if ok:
            rows.append(
                AggregateRow(
                    m=m,
                    method=method,
                    t_f_star=float(np.mean([r.t_f_star for r in ok])),
                    pair_disruption=float(np.mean([r.pair_disruption for r in ok])),
                    global_disruption=float(np.mean([r.global_disruption for r in ok])),
                    n_iter=float(np.mean([r.n_iter for r in ok])),
                    t_iter_avg=float(np.mean([r.t_iter_avg for r in ok])),
                    feasible_runs=len(ok),
                    total_runs=len(cell),
                )
            )
        else:
            rows.append(
                AggregateRow(
                    m=m, method=method, t_f_star=math.nan, pair_disruption=math.nan,
                    global_disruption=math.nan, n_iter=math.nan, t_iter_avg=math.nan,
                    feasible_runs=0, total_runs=len(cell),
                )
            )
    return rows


@dataclass
class SuiteResult:
    config: ExperimentConfig
    runs: list[RunRecord]
    aggregates: list[AggregateRow]
    elapsed: float
    out_dir: Optional[Path] = None

    @property
    def reports(self) -> list[MethodReport]:
        return [r.report for r in self.runs]

    def aggregate(self, m: int, method: str) -> AggregateRow:
        for row in self.aggregates:
            if row.m == m and row.method == method:
                return row
        raise KeyError(f"no aggregate for m={m}, method={method}")


def run_id(seed: int, m: int, method: str) -> str:
    return f"seed{seed:03d}_m{m}_{method}"


def run_suite(config: ExperimentConfig, out_dir: str | Path | None = None) -> SuiteResult:
    """Run every (seed, m, method) cell, aggregate, and optionally write files."""
    tic = time.perf_counter()
    cells = [
        generate_case(seed, m, config)
        for seed in sorted(config.seeds)
        for m in sorted(config.cooperator_counts)
    ]
    tasks = [(case, method) for case in cells for method in config.methods]

    if config.workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(lambda t: run_cell(t[0], t[1], config), tasks))
    else:
        records = [run_cell(case, method, config) for case, method in tasks]

    records.sort(key=lambda r: (r.report.seed, r.report.m, config.methods.index(r.report.method)))
    aggregates = aggregate_reports([r.report for r in records])
    result = SuiteResult(
        config=config, runs=records, aggregates=aggregates, elapsed=time.perf_counter() - tic
    )
    if out_dir is not None:
        result.out_dir = Path(out_dir)
        write_outputs(result, result.out_dir)
    return result


# ---------------------------------------------------------------------------
# Writers

AGGREGATE_COLUMNS = (
    "m", "method", "t_f_star", "pair_disruption", "global_disruption",
    "n_iter", "t_iter_avg", "feasible_runs", "total_runs",
)
RUN_COLUMNS = (
    "seed", "m", "method", "feasible", "t_f_star", "pair_disruption",
    "global_disruption", "n_iter", "t_iter_avg", "min_gap_slack",
    "max_terminal_dx2", "max_terminal_dv2", "trajectories", "error",
)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_trajectories_csv(path: Path, trajs: list[Trajectory], labels: list[str]) -> None:
    """One file per run: columns t, x, v, u, vehicle id, role."""
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "v", "u", "vehicle", "role"])
        for label, traj in zip(labels, trajs):
            role = "ego" if label == "ego" else "cooperator"
            times = traj.times
            for k in range(traj.nodes + 1):
                u_val = repr(float(traj.controls[k])) if k < traj.nodes else ""
                writer.writerow(
                    [repr(float(times[k])), repr(float(traj.positions[k])),
                     repr(float(traj.speeds[k])), u_val, label, role]
                )


def write_outputs(result: SuiteResult, out_dir: Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    traj_dir = out_dir / "trajectories"
    traj_dir.mkdir(exist_ok=True)

    for record in result.runs:
        rep = record.report
        if record.trajectory_set is not None and record.labels is not None:
            rel = f"trajectories/{run_id(rep.seed, rep.m, rep.method)}.csv"
            write_trajectories_csv(out_dir / rel, record.trajectory_set, record.labels)
            rep.trajectories = rel

    with (out_dir / "results.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(AGGREGATE_COLUMNS)
        for row in result.aggregates:
            writer.writerow([_fmt(getattr(row, col)) for col in AGGREGATE_COLUMNS])

    with (out_dir / "results_runs.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RUN_COLUMNS)
        for rep in result.reports:
            writer.writerow([_fmt(getattr(rep, col)) for col in RUN_COLUMNS])

    payload = {
        "schema": RESULTS_SCHEMA,
        "workers": result.config.workers,
        "elapsed_s": result.elapsed,
        "aggregates": {
            str(row.m): {
                r.method: {col: getattr(r, col) for col in AGGREGATE_COLUMNS[2:]}
                for r in result.aggregates
                if r.m == row.m
            }
            for row in result.aggregates
        },
        "runs": [
            {col: getattr(rep, col) for col in RUN_COLUMNS} for rep in result.reports
        ],
    }
    with (out_dir / "results.json").open("w") as fh:
        json.dump(payload, fh, indent=2, allow_nan=True)


def recomputed_global_disruption(record: RunRecord, case: BenchCase) -> float:
    """Independent recomputation of the reported global disruption."""
    plan = record.plan
    assert plan is not None
    scenario = case.scenario
    weights = [
        case.dcfg.for_vehicle(scenario.cooperator(i).speed, scenario.limits)
        for i in range(1, scenario.m + 1)
    ]
    report = report_from_states(
        [scenario.cooperator(i) for i in range(1, scenario.m + 1)],
        list(plan.cooperator_terminals),
        plan.t_f,
        weights,
        plan.slot.slot,
    )
    return report.global_total
