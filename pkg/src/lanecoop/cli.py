"""Command-line front end: single runs, benchmark suites, reachability queries.

Exit codes are a stable contract: 0 for a feasible solve, 1 for input errors,
2 for infeasible problems. ``LANECOOP_THREADS`` is the only environment
variable read; it sets the benchmark worker count.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from .bench import (
    ALL_METHODS,
    BenchCase,
    ExperimentConfig,
    RUN_COLUMNS,
    run_cell,
    run_id,
    run_suite,
    write_trajectories_csv,
)
from .model import ActuationLimits, VehicleState, scenario_violations
from .reachability import ReachabilityParams, contains, extreme_endpoints, p_lower, p_upper
from .scenario_io import (
    ScenarioFormatError,
    load_default_experiment,
    load_experiment,
    load_scenario,
)

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_INFEASIBLE = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lanecoop",
        description="Cooperative lane-change coordination and benchmarking",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="solve one scenario file with one method")
    run_p.add_argument("scenario", type=Path)
    run_p.add_argument("--method", choices=ALL_METHODS, default="pa2")
    run_p.add_argument("--out", type=Path, default=Path("out"))
    run_p.add_argument("--config", type=Path, default=None,
                       help="experiment file supplying solver/baseline settings")

    plan_p = sub.add_parser("plan", help="solve a scenario and export trajectories only")
    plan_p.add_argument("scenario", type=Path)
    plan_p.add_argument("--method", choices=ALL_METHODS, default="pa2")
    plan_p.add_argument("--out", type=Path, default=Path("out"))
    plan_p.add_argument("--config", type=Path, default=None)

    bench_p = sub.add_parser("bench", help="run a benchmark suite")
    bench_p.add_argument("experiment", type=Path, nargs="?", default=None,
                         help="experiment file (bundled default when omitted)")
    bench_p.add_argument("--config", type=Path, default=None,
                         help="alias for the experiment file path")
    bench_p.add_argument("--out", type=Path, default=Path("results"))
    bench_p.add_argument("--seed", type=int, default=None,
                         help="run only this seed instead of the configured list")

    reach_p = sub.add_parser("reach", help="reachable-set membership query")
    reach_p.add_argument("--x0", type=float, required=True)
    reach_p.add_argument("--v0", type=float, required=True)
    reach_p.add_argument("--t", type=float, required=True)
    reach_p.add_argument("--x", type=float, required=True)
    reach_p.add_argument("--v", type=float, required=True)
    reach_p.add_argument("--u-min", type=float, default=-7.0)
    reach_p.add_argument("--u-max", type=float, default=3.3)
    reach_p.add_argument("--v-min", type=float, default=5.0)
    reach_p.add_argument("--v-max", type=float, default=35.0)
    return parser


def _experiment_config(path: Path | None) -> ExperimentConfig:
    if path is None:
        return load_default_experiment()
    return load_experiment(path)


def _solve_scenario(args, trajectories_only: bool) -> int:
    try:
        scenario, dcfg = load_scenario(args.scenario)
    except ScenarioFormatError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    violations = scenario_violations(scenario)
    if violations:
        for v in violations:
            print(f"error: invalid scenario: {v}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    try:
        config = _experiment_config(args.config)
    except ScenarioFormatError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT_ERROR

    case = BenchCase(seed=0, m=scenario.m, scenario=scenario, v_d=dcfg.v_d, dcfg=dcfg)
    record = run_cell(case, args.method, config)
    report = record.report
    if not report.feasible:
        print(f"infeasible: {report.error}", file=sys.stderr)
        return EXIT_INFEASIBLE

    args.out.mkdir(parents=True, exist_ok=True)
    rid = run_id(0, scenario.m, args.method)
    traj_path = args.out / f"{rid}.csv"
    assert record.trajectory_set is not None and record.labels is not None
    write_trajectories_csv(traj_path, record.trajectory_set, record.labels)
    report.trajectories = traj_path.name
    print(
        f"{args.method}: t_f={report.t_f_star:.3f} s, slot={record.plan.slot.slot}, "
        f"pair disruption={report.pair_disruption:.6g}, "
        f"global disruption={report.global_disruption:.6g}, n_iter={report.n_iter}"
    )
    if not trajectories_only:
        payload = {col: getattr(report, col) for col in RUN_COLUMNS}
        with (args.out / f"{rid}.json").open("w") as fh:
            json.dump(payload, fh, indent=2)
    return EXIT_OK


def _cmd_bench(args) -> int:
    path = args.experiment or args.config
    try:
        config = _experiment_config(path)
    except ScenarioFormatError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    if args.seed is not None:
        config = dataclasses.replace(config, seeds=(args.seed,))
    workers = os.environ.get("LANECOOP_THREADS")
    if workers is not None:
        config = dataclasses.replace(config, workers=max(1, int(workers)))

    result = run_suite(config, out_dir=args.out)
    header = f"{'m':>2} {'method':<18} {'t_f*':>7} {'pair':>10} {'global':>10} {'n_iter':>7} {'t_iter':>8}"
    print(header)
    for row in result.aggregates:
        print(
            f"{row.m:>2} {row.method:<18} {row.t_f_star:>7.3f} {row.pair_disruption:>10.5f} "
            f"{row.global_disruption:>10.5f} {row.n_iter:>7.2f} {row.t_iter_avg:>8.3f}"
        )
    print(f"wrote {args.out}/results.csv, results_runs.csv, results.json "
          f"({result.elapsed:.1f} s, workers={config.workers})")
    total = len(result.reports)
    failed = sum(1 for r in result.reports if not r.feasible)
    if total and failed == total:
        return EXIT_INFEASIBLE
    return EXIT_OK


def _cmd_reach(args) -> int:
    if args.t <= 0.0:
        print("error: query time must be positive", file=sys.stderr)
        return EXIT_INPUT_ERROR
    try:
        limits = ActuationLimits(
            u_min=args.u_min, u_max=args.u_max, v_min=args.v_min, v_max=args.v_max
        )
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    origin = VehicleState(position=args.x0, speed=args.v0)
    params = ReachabilityParams.from_limits(limits)
    up = float(p_upper(args.x, args.v, args.t, origin, params))
    lo = float(p_lower(args.x, args.v, args.t, origin, params))
    member = bool(contains(args.x, args.v, args.t, origin, params, limits))
    lo_ep, hi_ep = extreme_endpoints(origin, params, args.t)
    print(f"p_upper = {up:.9g}")
    print(f"p_lower = {lo:.9g}")
    print(f"member  = {member}")
    print(f"constant-min-control endpoint: x = {lo_ep.position:.6g}, v = {lo_ep.speed:.6g}")
    print(f"constant-max-control endpoint: x = {hi_ep.position:.6g}, v = {hi_ep.speed:.6g}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _solve_scenario(args, trajectories_only=False)
    if args.command == "plan":
        return _solve_scenario(args, trajectories_only=True)
    if args.command == "bench":
        return _cmd_bench(args)
    if args.command == "reach":
        return _cmd_reach(args)
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
