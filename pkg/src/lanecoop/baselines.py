"""Iterative coordination pipelines and the car-following model for bystanders.

Both baselines share the same outer loop: the ego first plans its own
terminal time and state against the slow vehicle only, an adjacent cooperator
pair is then asked to open the gap, and whenever no pair is feasible or the
incurred disruption exceeds a threshold the terminal time is relaxed
geometrically and everything is re-solved. The two variants differ in the
pair-selection metric (position-only with a hard terminal-speed band versus
full disruption with a soft terminal-speed cost). The same loop drives the
global-coordination variant by swapping pair selection for the all-cooperator
terminal solve.

Cooperators ahead of the selected pair hold constant speed; the ones behind
follow an intelligent-driver car-following law against the committed
trajectory in front of them.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .coordination import (
    CoordinationInfeasible,
    CoordinationSolverFailure,
    SlotAssignment,
    SolverConfig,
    TerminalPlan,
    solve_problem1,
    verify_plan,
)
from .disruption import DisruptionConfig, aggregate, vehicle_entry
from .model import ActuationLimits, Scenario, VehicleState, predict_uncontrolled
from .planner import (
    CHAIN_TERMINAL_SLACK,
    PlannerConfig,
    PlannerInfeasible,
    Trajectory,
    constant_speed_trajectory,
    plan_all,
    plan_min_energy,
    project_target_behind_leader,
    trajectory_from_controls,
    transcription_matrices,
)
from .reachability import (
    ReachabilityParams,
    boundary_coefficients,
    saturation_aux_coefficients,
)
from .solvers import ConstraintSet, Quadratic, find_feasible, golden_section, solve_qcqp

log = logging.getLogger(__name__)

ITERATIVE_METHODS = ("baseline-position", "baseline-full", "pa1")


@dataclass(frozen=True)
class BaselineConfig:
    alpha: float = 0.5  # time-vs-energy weight in the ego's own plan
    d_th: float = 0.2  # pair-disruption threshold gating loop exit
    d_th_global: float = 0.05  # global-disruption threshold for the all-vehicle variant
    relaxation: float = 1.2  # terminal-time multiplier on failure
    max_iters: int = 16
    variant: str = "full-disruption-pair"  # or "position-only-pair"
    terminal_speed_mode: str = "terminal-cost"  # or "hard-constraint"
    speed_tolerance: float = 2.0  # m/s band for the hard terminal-speed mode
    terminal_speed_weight: float = 0.5  # weight of the soft terminal-speed cost
    step1_nodes: int = 40
    step1_grid: int = 26
    step1_refine: int = 18
    t_lb: float = 0.5
    t_max: float = 20.0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.relaxation > 1.0:
            raise ValueError("relaxation factor must exceed 1")
        if self.max_iters < 1:
            raise ValueError("need max_iters >= 1")
        if not (self.d_th > 0.0 and self.d_th_global > 0.0):
            raise ValueError("disruption thresholds must be positive")
        if self.variant not in ("position-only-pair", "full-disruption-pair"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.terminal_speed_mode not in ("hard-constraint", "terminal-cost"):
            raise ValueError(f"unknown terminal_speed_mode {self.terminal_speed_mode!r}")


def config_for_method(method: str, base: BaselineConfig) -> BaselineConfig:
    if method == "baseline-position":
        return dataclasses.replace(
            base, variant="position-only-pair", terminal_speed_mode="hard-constraint"
        )
    if method == "baseline-full":
        return dataclasses.replace(
            base, variant="full-disruption-pair", terminal_speed_mode="terminal-cost"
        )
    if method == "pa1":
        return dataclasses.replace(base, terminal_speed_mode="terminal-cost")
    raise ValueError(f"unknown iterative method {method!r}")


# ---------------------------------------------------------------------------
# Intelligent driver model


@dataclass(frozen=True)
class IDMParams:
    desired_speed: float
    max_accel: float = 1.4
    comfortable_decel: float = 2.0
    accel_exponent: float = 4.0
    min_gap: float = 2.0
    time_headway: float = 1.5

    def __post_init__(self) -> None:
        for name in ("desired_speed", "max_accel", "comfortable_decel",
                     "accel_exponent", "min_gap", "time_headway"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")


def default_idm_params(v_d: float) -> IDMParams:
    return IDMParams(desired_speed=v_d)


def idm_acceleration(
    self_state: VehicleState,
    leader: Optional[VehicleState],
    p: IDMParams,
    limits: ActuationLimits,
) -> float:
    """Car-following acceleration, clamped to the actuation box."""
    v = max(self_state.speed, 0.0)
    free_term = 1.0 - (v / p.desired_speed) ** p.accel_exponent
    if leader is None:
        a = p.max_accel * free_term
    else:
        gap = leader.position - self_state.position
        if gap <= 0.0:
            log.warning("non-positive gap %.3f m in car-following update", gap)
            return limits.u_min
        dv = self_state.speed - leader.speed
        s_star = (
            p.min_gap
            + v * p.time_headway
            + v * dv / (2.0 * math.sqrt(p.max_accel * p.comfortable_decel))
        )
        a = p.max_accel * (free_term - (s_star / gap) ** 2)
    return min(max(a, limits.u_min), limits.u_max)


def simulate_idm_follower(
    initial: VehicleState,
    leader: Trajectory,
    p: IDMParams,
    limits: ActuationLimits,
    safety,
) -> Trajectory:
    """Integrate the car-following law on the leader's grid.

    A one-step safety governor caps the acceleration so the speed-dependent
    gap stays non-negative at the next node whenever braking authority
    allows; residual deficits are logged and left to the audit.
    """
    dt = leader.dt
    n = leader.nodes
    x = np.empty(n + 1)
    v = np.empty(n + 1)
    u = np.empty(n)
    x[0], v[0] = initial.position, initial.speed
    denom = 0.5 * dt * dt + safety.phi * dt
    for k in range(n):
        state = VehicleState(position=x[k], speed=v[k])
        lead_state = VehicleState(position=float(leader.positions[k]), speed=float(leader.speeds[k]))
        a = idm_acceleration(state, lead_state, p, limits)
        a_safe = (
            float(leader.positions[k + 1]) - x[k] - v[k] * dt - safety.phi * v[k] - safety.epsilon
        ) / denom
        a = min(a, a_safe)
        a = max(a, limits.u_min, (limits.v_min - v[k]) / dt)
        a = min(a, limits.u_max, (limits.v_max - v[k]) / dt)
        u[k] = a
        x[k + 1] = x[k] + v[k] * dt + 0.5 * a * dt * dt
        v[k + 1] = v[k] + a * dt
    return Trajectory(dt=dt, positions=x, speeds=v, controls=u)


# ---------------------------------------------------------------------------
# Step 1: the ego plans its own terminal time and state


@dataclass
class Step1Result:
    t_f_star: float
    trajectory: Trajectory
    terminal: VehicleState
    cost: float


class Step1Infeasible(Exception):
    pass


def _step1_fixed_tf(
    scenario: Scenario, t_f: float, dcfg: DisruptionConfig, config: BaselineConfig
) -> Optional[Step1Result]:
    """Transcribed ego-only solve at a fixed terminal time (None if infeasible)."""
    n = config.step1_nodes
    dt = t_f / n
    lim = scenario.limits
    ego, u_veh = scenario.ego, scenario.uncontrolled
    sv, sx = transcription_matrices(n, dt)
    x_nom = ego.position + ego.speed * dt * np.arange(n + 1)
    v0 = ego.speed

    rows = [np.eye(n), -np.eye(n), sv[1:], -sv[1:]]
    rhs = np.concatenate([
        np.full(n, lim.u_max),
        np.full(n, -lim.u_min),
        np.full(n, lim.v_max - v0),
        np.full(n, v0 - lim.v_min),
    ])
    lead_x = u_veh.position + u_veh.speed * dt * np.arange(n + 1)
    rows.append(sx[1:] + scenario.safety.phi * sv[1:])
    rhs = np.concatenate([
        rhs,
        lead_x[1:] - scenario.safety.epsilon - x_nom[1:] - scenario.safety.phi * v0,
    ])

    e_norm = 0.5 * lim.u_max**2 * config.t_max
    q_mat = (dt * (1.0 - config.alpha) / e_norm) * np.eye(n)
    c = np.zeros(n)
    s = 0.0
    sv_n = sv[n]
    if config.terminal_speed_mode == "hard-constraint":
        rows.append(sv_n[None, :])
        rhs = np.concatenate([rhs, [dcfg.v_d + config.speed_tolerance - v0]])
        rows.append(-sv_n[None, :])
        rhs = np.concatenate([rhs, [v0 - (dcfg.v_d - config.speed_tolerance)]])
    else:
        dev_v = max(abs(lim.v_max - dcfg.v_d), abs(lim.v_min - dcfg.v_d))
        w = config.terminal_speed_weight / dev_v**2
        q_mat = q_mat + 2.0 * w * np.outer(sv_n, sv_n)
        c = c + 2.0 * w * (v0 - dcfg.v_d) * sv_n
        s += w * (v0 - dcfg.v_d) ** 2

    cons = ConstraintSet(a_mat=np.vstack(rows), b=rhs)
    u_ramp = min(max((dcfg.v_d - v0) / t_f, lim.u_min), lim.u_max)
    feas = find_feasible(cons, np.full(n, u_ramp), tol=1e-9)
    if feas.certified_infeasible:
        return None
    result = solve_qcqp(Quadratic(P=q_mat, r=c, s=s), cons, feas.z, feas_tol=1e-9, stat_tol=1e-9)
    if not result.ok:
        return None
    traj = trajectory_from_controls(ego, result.z, dt)
    cost = result.objective + config.alpha * t_f / config.t_max
    return Step1Result(t_f_star=t_f, trajectory=traj, terminal=traj.terminal_state(), cost=cost)


def step1_ego_plan(
    scenario: Scenario, dcfg: DisruptionConfig, config: BaselineConfig
) -> Step1Result:
    """Ego-only terminal time and control: weighted maneuver time plus energy.

    The terminal time is found by a coarse grid over the allowed horizon with
    golden-section refinement; each evaluation is a convex transcribed solve
    against the slow vehicle's constant-speed prediction.
    """
    cache: dict[float, Optional[Step1Result]] = {}

    def evaluate(t_f: float) -> float:
        t_key = float(t_f)
        if t_key not in cache:
            cache[t_key] = _step1_fixed_tf(scenario, t_key, dcfg, config)
        res = cache[t_key]
        return res.cost if res is not None else math.inf

    grid = np.linspace(config.t_lb, config.t_max, config.step1_grid)
    values = [evaluate(float(t)) for t in grid]
    best_idx = int(np.argmin(values))
    if math.isinf(values[best_idx]):
        raise Step1Infeasible("ego plan infeasible at every terminal time up to the cap")
    if config.step1_refine > 0:
        lo = float(grid[max(best_idx - 1, 0)])
        hi = float(grid[min(best_idx + 1, len(grid) - 1)])
        golden_section(evaluate, lo, hi, iters=config.step1_refine)
    t_best = min((t for t, r in cache.items() if r is not None), key=lambda t: cache[t].cost)
    return cache[t_best]


# ---------------------------------------------------------------------------
# Step 2: adjacent-pair selection


@dataclass
class Step2Result:
    slot: int
    metric: float
    terminals: dict[int, VehicleState]  # cooperator index -> terminal state


class NoFeasiblePair(Exception):
    pass


def _pair_members(slot: int, m: int) -> list[int]:
    members = []
    if slot >= 1:
        members.append(slot)
    if slot < m:
        members.append(slot + 1)
    return members


def _pair_subproblem(
    scenario: Scenario,
    slot: int,
    t_f: float,
    ego_terminal: VehicleState,
    dcfg: DisruptionConfig,
    config: BaselineConfig,
    reach_margin: float = 0.0,
    gap_margin: float = 0.0,
) -> Optional[tuple[float, dict[int, VehicleState]]]:
    """Solve one slot's pair adjustment; other cooperators hold constant speed."""
    m = scenario.m
    members = _pair_members(slot, m)
    n_mem = len(members)
    n = 4 * n_mem
    idx = {veh: (2 * j, 2 * j + 1) for j, veh in enumerate(members)}
    aux_idx = {veh: (2 * n_mem + 2 * j, 2 * n_mem + 2 * j + 1) for j, veh in enumerate(members)}
    phi, eps = scenario.safety.phi, scenario.safety.epsilon
    lim = scenario.limits
    params = ReachabilityParams.from_limits(lim)

    rows: list[np.ndarray] = []
    rhs: list[float] = []
    quads: list[Quadratic] = []

    def const_state(i: int) -> VehicleState:
        return predict_uncontrolled(scenario.cooperator(i), t_f)

    def gap(lead, follow) -> bool:
        """lead/follow are cooperator ints (variables) or VehicleState consts."""
        a = np.zeros(n)
        c = eps + gap_margin
        if isinstance(lead, int):
            a[idx[lead][0]] -= 1.0
        else:
            c -= lead.position
        if isinstance(follow, int):
            a[idx[follow][0]] += 1.0
            a[idx[follow][1]] += phi
        else:
            c += follow.position + phi * follow.speed
        if not np.any(a):
            return c <= 1e-9
        rows.append(a)
        rhs.append(-c)
        return True

    # Ego must stay boxed by the uncontrolled fast-lane bounds regardless of slot.
    if scenario.front is not None:
        if not gap(predict_uncontrolled(scenario.front, t_f), ego_terminal):
            return None
    if scenario.back is not None:
        if not gap(ego_terminal, predict_uncontrolled(scenario.back, t_f)):
            return None

    order: list = []
    if scenario.front is not None:
        order.append(predict_uncontrolled(scenario.front, t_f))
    for i in range(1, slot + 1):
        order.append(i if i in idx else const_state(i))
    order.append(ego_terminal)
    for i in range(slot + 1, m + 1):
        order.append(i if i in idx else const_state(i))
    if scenario.back is not None:
        order.append(predict_uncontrolled(scenario.back, t_f))
    for lead, follow in zip(order, order[1:]):
        if isinstance(lead, int) or isinstance(follow, int):
            if not gap(lead, follow):
                return None
        # const-const neighbours were valid at time 0 and stay so under
        # constant speeds; nothing to add.

    for i in members:
        ix, iv = idx[i]
        a = np.zeros(n)
        a[iv] = 1.0
        rows.append(a)
        rhs.append(lim.v_max)
        a = np.zeros(n)
        a[iv] = -1.0
        rows.append(a)
        rhs.append(-lim.v_min)
        if config.variant == "position-only-pair":
            a = np.zeros(n)
            a[iv] = 1.0
            rows.append(a)
            rhs.append(dcfg.v_d + config.speed_tolerance)
            a = np.zeros(n)
            a[iv] = -1.0
            rows.append(a)
            rhs.append(-(dcfg.v_d - config.speed_tolerance))
        upper, lower = boundary_coefficients(scenario.cooperator(i), params, t_f)
        for p_vv, r_v, r_x, s_val in (upper, lower):
            p_mat = np.zeros((n, n))
            p_mat[iv, iv] = p_vv
            r = np.zeros(n)
            r[iv] = r_v
            r[ix] = r_x
            quads.append(Quadratic(P=p_mat, r=r, s=s_val + reach_margin * abs(r_x)))
        ipk, ivl = aux_idx[i]
        sat_up, sat_lo = saturation_aux_coefficients(scenario.cooperator(i), params, t_f)
        slot_of = {"x": ix, "v": iv}
        for spec, iaux in ((sat_up, ipk), (sat_lo, ivl)):
            slot_of["aux"] = iaux
            p_mat = np.zeros((n, n))
            for (a_key, b_key), val in spec["P"].items():
                ia, ib = slot_of[a_key], slot_of[b_key]
                p_mat[ia, ib] += val
                if ia != ib:
                    p_mat[ib, ia] += val
            r = np.zeros(n)
            for a_key, val in spec["r"].items():
                r[slot_of[a_key]] += val
            quads.append(
                Quadratic(P=p_mat, r=r, s=spec["s"] + reach_margin * abs(spec["r"]["x"]))
            )
        a = np.zeros(n)
        a[ipk] = 1.0
        rows.append(a)
        rhs.append(lim.v_max)
        a = np.zeros(n)
        a[ivl] = -1.0
        rows.append(a)
        rhs.append(-lim.v_min)

    q_diag = np.zeros(n)
    c_vec = np.zeros(n)
    s_obj = 0.0
    reg = 1e-10
    for i in members:
        ix, iv = idx[i]
        veh = scenario.cooperator(i)
        w = dcfg.for_vehicle(veh.speed, lim)
        ex = veh.position + veh.speed * t_f
        q_diag[ix] += 2.0 * w.gamma_x
        c_vec[ix] -= 2.0 * w.gamma_x * ex
        s_obj += w.gamma_x * ex * ex
        if config.variant == "full-disruption-pair":
            q_diag[iv] += 2.0 * w.gamma_v
            c_vec[iv] -= 2.0 * w.gamma_v * dcfg.v_d
            s_obj += w.gamma_v * dcfg.v_d * dcfg.v_d
        ipk, ivl = aux_idx[i]
        q_diag[ipk] = 2.0 * reg
        c_vec[ipk] = -2.0 * reg * lim.v_max
        q_diag[ivl] = 2.0 * reg
        c_vec[ivl] = -2.0 * reg * lim.v_min

    cons = ConstraintSet(a_mat=np.vstack(rows), b=np.asarray(rhs), quads=tuple(quads))
    z0 = []
    for i in members:
        veh = scenario.cooperator(i)
        z0.extend((veh.position + veh.speed * t_f, veh.speed))
    for _ in members:
        z0.extend((lim.v_max, lim.v_min))
    feas = find_feasible(cons, np.asarray(z0), tol=1e-9)
    if feas.certified_infeasible:
        return None
    result = solve_qcqp(
        Quadratic(P=np.diag(q_diag), r=c_vec, s=s_obj), cons, feas.z,
        feas_tol=1e-9, stat_tol=1e-9,
    )
    if not result.ok:
        return None
    terminals = {
        i: VehicleState(position=float(result.z[idx[i][0]]), speed=float(result.z[idx[i][1]]))
        for i in members
    }
    return result.objective, terminals


def step2_select_pair(
    scenario: Scenario,
    t_f_star: float,
    ego_terminal: VehicleState,
    dcfg: DisruptionConfig,
    config: BaselineConfig,
    reach_margin: float = 0.0,
    gap_margin: float = 0.0,
    include_end_slots: bool = True,
) -> Step2Result:
    """Pick the adjacent cooperator pair whose adjustment disrupts least.

    With ``include_end_slots`` the ego may also merge ahead of the first or
    behind the last cooperator, judged one-sided; the iterative pipelines
    restrict themselves to genuine cooperator pairs. Raises
    ``NoFeasiblePair`` when no slot admits a feasible pair adjustment, which
    signals time relaxation.
    """
    if scenario.m < 1:
        raise ValueError("pair selection needs at least one cooperator")
    slots = range(scenario.m + 1) if include_end_slots else range(1, scenario.m)
    best: Optional[Step2Result] = None
    for slot in slots:
        solved = _pair_subproblem(scenario, slot, t_f_star, ego_terminal, dcfg, config,
                                  reach_margin, gap_margin)
        if solved is None:
            continue
        metric, terminals = solved
        if best is None or (metric, slot) < (best.metric, best.slot):
            best = Step2Result(slot=slot, metric=metric, terminals=terminals)
    if best is None:
        raise NoFeasiblePair(f"no feasible pair at t_f={t_f_star:.3f}")
    return best


# ---------------------------------------------------------------------------
# Trajectory assembly for the iterative methods


def assemble_baseline_trajectories(
    scenario: Scenario,
    slot: int,
    pair_terminals: dict[int, VehicleState],
    ego_terminal: VehicleState,
    t_f: float,
    dcfg: DisruptionConfig,
    planner_cfg: PlannerConfig,
) -> tuple[TerminalPlan, list[Trajectory]]:
    """Plan the pair and ego, extrapolate the front, simulate the rest.

    The fast-lane chain is planned cooperator after cooperator (constant
    speed ahead of the pair, minimum energy for the pair, car-following
    behind it); the ego is planned in its own lane against the slow vehicle.
    Returns the completed plan (with simulated terminal states for the
    trailing cooperators) plus trajectories in fast-lane order with the ego
    inserted at its slot.
    """
    m = scenario.m
    n = planner_cfg.nodes
    times = np.linspace(0.0, t_f, n + 1)
    u_positions = scenario.uncontrolled.position + scenario.uncontrolled.speed * times
    idm = default_idm_params(dcfg.v_d)

    lead = None
    lead_traj: Optional[Trajectory] = None
    if scenario.front is not None:
        lead = scenario.front.position + scenario.front.speed * times
    coop_trajs: list[Trajectory] = []
    terminals: dict[int, VehicleState] = {}
    for i in range(1, m + 1):
        initial = scenario.cooperator(i)
        if i in pair_terminals:
            target = pair_terminals[i]
            if isinstance(lead, Trajectory):
                target = project_target_behind_leader(
                    target, float(lead.positions[-1]), scenario.safety
                )
            traj = plan_min_energy(
                initial, target, t_f, lead, scenario.limits, scenario.safety,
                planner_cfg,
                trailing=scenario.back if i == m else None,
                terminal_slack=CHAIN_TERMINAL_SLACK,
            )
            terminals[i] = pair_terminals[i]
        elif all(j not in pair_terminals for j in range(1, i + 1)):
            # Ahead of the selected pair: constant-speed cruise.
            traj = constant_speed_trajectory(initial, t_f, n)
            terminals[i] = traj.terminal_state()
        else:
            assert lead_traj is not None
            traj = simulate_idm_follower(initial, lead_traj, idm, scenario.limits,
                                         scenario.safety)
            terminals[i] = traj.terminal_state()
        coop_trajs.append(traj)
        lead = traj
        lead_traj = traj

    ego_traj = plan_min_energy(
        scenario.ego, ego_terminal, t_f, u_positions, scenario.limits, scenario.safety,
        planner_cfg,
        terminal_slack=CHAIN_TERMINAL_SLACK,
    )
    trajectories = coop_trajs[:slot] + [ego_traj] + coop_trajs[slot:]

    weights = [
        dcfg.for_vehicle(scenario.cooperator(i).speed, scenario.limits)
        for i in range(1, m + 1)
    ]
    entries = [
        vehicle_entry(scenario.cooperator(i), terminals[i], t_f, weights[i - 1])
        for i in range(1, m + 1)
    ]
    report = aggregate(entries, slot)
    plan = TerminalPlan(
        t_f=t_f,
        slot=SlotAssignment(slot=slot, m=m),
        ego_terminal=ego_terminal,
        cooperator_terminals=tuple(terminals[i] for i in range(1, m + 1)),
        report=report,
        objective=report.pair,
        unified=False,
    )
    verify_plan(plan, scenario, tol=1e-6)
    return plan, trajectories


# ---------------------------------------------------------------------------
# The iterative outer loop


@dataclass
class IterativeResult:
    plan: TerminalPlan
    trajectories: list[Trajectory]
    n_iter: int
    iter_times: list[float]
    t_f_history: list[float]


class IterationLimitExceeded(Exception):
    def __init__(self, attempts: int, message: str):
        self.attempts = attempts
        super().__init__(message)


def run_iterative(
    scenario: Scenario,
    dcfg: DisruptionConfig,
    config: BaselineConfig,
    method: str = "baseline-full",
    solver_cfg: SolverConfig = SolverConfig(),
    planner_cfg: PlannerConfig = PlannerConfig(),
) -> IterativeResult:
    """Relaxation loop: ego plan, cooperator adjustment, threshold check.

    The attempted terminal times are exactly t_f* multiplied by the
    relaxation factor per failed attempt. A pass requires a feasible
    cooperator adjustment below the disruption threshold and a consistent
    trajectory plan; any miss triggers the next relaxation.
    """
    if method not in ITERATIVE_METHODS:
        raise ValueError(f"unknown iterative method {method!r}")
    config = config_for_method(method, config)

    t_f_base: Optional[float] = None
    t_f_history: list[float] = []
    iter_times: list[float] = []
    for k in range(config.max_iters):
        tic = time.perf_counter()
        if t_f_base is None:
            step1 = step1_ego_plan(scenario, dcfg, config)
            t_f_base = step1.t_f_star
            t_f = t_f_base
        else:
            t_f = t_f_base * config.relaxation**k
            if t_f > config.t_max:
                iter_times.append(time.perf_counter() - tic)
                t_f_history.append(t_f)
                raise IterationLimitExceeded(
                    k + 1, f"relaxed terminal time {t_f:.2f} s exceeds the cap"
                )
            fixed = _step1_fixed_tf(scenario, t_f, dcfg, config)
            if fixed is None:
                iter_times.append(time.perf_counter() - tic)
                t_f_history.append(t_f)
                continue
            step1 = fixed
        t_f_history.append(t_f)

        plan: Optional[TerminalPlan] = None
        pair: Optional[Step2Result] = None
        metric = math.inf
        # The pair methods gate on the selected pair's disruption, the
        # all-vehicle variant on the global sum it actually minimizes.
        threshold = config.d_th_global if method == "pa1" else config.d_th
        try:
            if method == "pa1":
                plan = solve_problem1(scenario, t_f, step1.terminal, dcfg, solver_cfg)
                metric = plan.report.global_total
            else:
                pair = step2_select_pair(scenario, t_f, step1.terminal, dcfg, config,
                                         reach_margin=solver_cfg.reach_margin,
                                         gap_margin=solver_cfg.gap_margin,
                                         include_end_slots=False)
                metric = pair.metric
        except (NoFeasiblePair, CoordinationInfeasible, CoordinationSolverFailure):
            iter_times.append(time.perf_counter() - tic)
            continue
        iter_times.append(time.perf_counter() - tic)

        if not metric < threshold:
            continue
        try:
            if method == "pa1":
                assert plan is not None
                trajectories = plan_all(plan, scenario, planner_cfg)
            else:
                assert pair is not None
                plan, trajectories = assemble_baseline_trajectories(
                    scenario, pair.slot, pair.terminals, step1.terminal, t_f, dcfg, planner_cfg
                )
        except PlannerInfeasible:
            continue
        return IterativeResult(
            plan=plan,
            trajectories=trajectories,
            n_iter=k + 1,
            iter_times=iter_times,
            t_f_history=t_f_history,
        )
    raise IterationLimitExceeded(
        config.max_iters, f"no passing plan within {config.max_iters} relaxations"
    )
