"""Minimum-energy trajectory generation with headway and terminal-ball constraints.

Trajectories are zero-order-hold discretizations of the double integrator:
the discrete dynamics are exact, so the continuous-time state is recovered
at every node without integration error. Each vehicle is planned as a convex
program in its control vector; a platoon is planned sequentially front to
back so every follower constrains against the committed leader trajectory.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .model import ActuationLimits, SafetyParams, Scenario, VehicleState, predict_uncontrolled
from .reachability import ReachabilityParams, contains
from .solvers import ConstraintSet, Quadratic, find_feasible, solve_qcqp


@dataclass(frozen=True)
class PlannerConfig:
    nodes: int = 100
    delta_x: float = 0.1  # squared terminal position tolerance, m^2
    delta_v: float = 0.1  # squared terminal speed tolerance, m^2/s^2
    stat_tol: float = 1e-7
    feas_tol: float = 1e-9

    def __post_init__(self) -> None:
        if self.nodes < 10:
            raise ValueError(f"need at least 10 nodes, got {self.nodes}")
        for name in ("delta_x", "delta_v", "stat_tol", "feas_tol"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled states and controls over [0, t_f]; controls one shorter."""

    dt: float
    positions: np.ndarray
    speeds: np.ndarray
    controls: np.ndarray

    def __post_init__(self) -> None:
        if len(self.positions) != len(self.speeds) or len(self.controls) != len(self.positions) - 1:
            raise ValueError("array lengths must be N+1, N+1, N")

    @property
    def nodes(self) -> int:
        return len(self.controls)

    @property
    def t_f(self) -> float:
        return self.dt * self.nodes

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.nodes + 1)

    def terminal_state(self) -> VehicleState:
        return VehicleState(position=float(self.positions[-1]), speed=float(self.speeds[-1]))

    def dynamics_residual(self) -> float:
        """Max deviation from the exact zero-order-hold update (0 by construction)."""
        x, v, u = self.positions, self.speeds, self.controls
        rx = x[1:] - (x[:-1] + v[:-1] * self.dt + 0.5 * u * self.dt**2)
        rv = v[1:] - (v[:-1] + u * self.dt)
        return float(max(np.max(np.abs(rx), initial=0.0), np.max(np.abs(rv), initial=0.0)))


class PlannerInfeasible(Exception):
    """No admissible trajectory exists; carries the most-violated constraint."""

    def __init__(self, constraint: str, violation: float):
        self.constraint = constraint
        self.violation = violation
        super().__init__(f"infeasible trajectory program: {constraint} violated by {violation:.3g}")


class SolverFailure(Exception):
    """The iteration budget was exhausted before meeting the tolerances."""


def trajectory_from_controls(initial: VehicleState, controls: np.ndarray, dt: float) -> Trajectory:
    n = len(controls)
    x = np.empty(n + 1)
    v = np.empty(n + 1)
    x[0], v[0] = initial.position, initial.speed
    for k in range(n):
        x[k + 1] = x[k] + v[k] * dt + 0.5 * controls[k] * dt * dt
        v[k + 1] = v[k] + controls[k] * dt
    return Trajectory(dt=dt, positions=x, speeds=v, controls=np.asarray(controls, dtype=float))


def constant_speed_trajectory(state: VehicleState, t_f: float, nodes: int) -> Trajectory:
    return trajectory_from_controls(state, np.zeros(nodes), t_f / nodes)


def transcription_matrices(nodes: int, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """(Sv, Sx) mapping the control vector to speed/position offsets at each node."""
    k = np.arange(nodes + 1)[:, None]
    j = np.arange(nodes)[None, :]
    sv = dt * (j < k)
    sx = dt * dt * np.where(j < k, k - j - 0.5, 0.0)
    return sv, sx


def leader_positions(leader, t_f: float, nodes: int) -> np.ndarray:
    """Sample a leader onto the planning grid (trajectory, state, or array)."""
    if isinstance(leader, Trajectory):
        if leader.nodes != nodes or not np.isclose(leader.t_f, t_f, rtol=1e-9, atol=1e-9):
            raise ValueError("leader trajectory must share dt and horizon")
        return leader.positions
    if isinstance(leader, VehicleState):
        times = np.linspace(0.0, t_f, nodes + 1)
        return leader.position + leader.speed * times
    arr = np.asarray(leader, dtype=float)
    if arr.shape != (nodes + 1,):
        raise ValueError("leader position array must have nodes+1 samples")
    return arr


def energy(traj: Trajectory) -> float:
    """Control-effort surrogate: sum of 0.5 u^2 dt over the horizon (m^2/s^3)."""
    return float(np.sum(0.5 * traj.controls**2) * traj.dt)


def plan_min_energy(
    initial: VehicleState,
    target: VehicleState,
    t_f: float,
    leader,
    limits: ActuationLimits,
    safety: SafetyParams,
    config: PlannerConfig,
    trailing: VehicleState | None = None,
    terminal_slack: tuple[float, float, float, float] | None = None,
) -> Trajectory:
    """Minimum-energy trajectory from ``initial`` into the terminal ball at ``target``.

    ``leader`` (a Trajectory, a constant-speed VehicleState, a position array,
    or None) imposes the speed-dependent headway at every node. ``trailing``
    optionally keeps the planned vehicle ahead of an uncontrolled follower.
    ``terminal_slack`` overrides the symmetric ball radii with explicit
    (x_below, x_above, v_below, v_above) slacks; sequential platoon planning
    uses an asymmetric interval so a leader cannot undershoot the landing
    point its follower's program was built on.
    """
    if t_f <= 0.0:
        raise ValueError(f"horizon must be positive, got {t_f}")
    params = ReachabilityParams.from_limits(limits)
    if not contains(target.position, target.speed, t_f, initial, params, limits, tol=1e-6):
        raise ValueError(
            f"target ({target.position:.3f}, {target.speed:.3f}) not reachable "
            f"from ({initial.position:.3f}, {initial.speed:.3f}) in {t_f:.3f} s"
        )
    n = config.nodes
    dt = t_f / n
    sv, sx = transcription_matrices(n, dt)
    x_nom = initial.position + initial.speed * dt * np.arange(n + 1)
    v0 = initial.speed

    rows: list[np.ndarray] = []
    rhs: list[float] = []
    labels: list[str] = []

    eye = np.eye(n)
    rows.append(eye)
    rhs.extend([limits.u_max] * n)
    labels.extend(f"u_max[{k}]" for k in range(n))
    rows.append(-eye)
    rhs.extend([-limits.u_min] * n)
    labels.extend(f"u_min[{k}]" for k in range(n))

    rows.append(sv[1:])
    rhs.extend([limits.v_max - v0] * n)
    labels.extend(f"v_max[{k}]" for k in range(1, n + 1))
    rows.append(-sv[1:])
    rhs.extend([v0 - limits.v_min] * n)
    labels.extend(f"v_min[{k}]" for k in range(1, n + 1))

    if leader is not None:
        lead_x = leader_positions(leader, t_f, n)
        slack0 = lead_x[0] - initial.position - safety.min_gap(initial.speed)
        if slack0 < -1e-9:
            raise PlannerInfeasible("headway[0]", -slack0)
        rows.append(sx[1:] + safety.phi * sv[1:])
        rhs.extend(lead_x[1:] - safety.epsilon - x_nom[1:] - safety.phi * v0)
        labels.extend(f"headway[{k}]" for k in range(1, n + 1))

    if trailing is not None:
        trail_x = trailing.position + trailing.speed * dt * np.arange(n + 1)
        need = safety.min_gap(trailing.speed)
        slack0 = initial.position - trail_x[0] - need
        if slack0 < -1e-9:
            raise PlannerInfeasible("trailing[0]", -slack0)
        rows.append(-sx[1:])
        rhs.extend(x_nom[1:] - trail_x[1:] - need)
        labels.extend(f"trailing[{k}]" for k in range(1, n + 1))

    # The terminal balls are one-dimensional, so each is exactly the interval
    # |final - target| <= sqrt(delta): two linear rows, no approximation.
    wx, ex = sx[n], x_nom[n] - target.position
    wv, ev = sv[n], v0 - target.speed
    if terminal_slack is None:
        x_lo = x_hi = math.sqrt(config.delta_x)
        v_lo = v_hi = math.sqrt(config.delta_v)
    else:
        x_lo, x_hi, v_lo, v_hi = terminal_slack
    rows.append(wx[None, :])
    rhs.append(x_hi - ex)
    labels.append("terminal_x_hi")
    rows.append(-wx[None, :])
    rhs.append(x_lo + ex)
    labels.append("terminal_x_lo")
    rows.append(wv[None, :])
    rhs.append(v_hi - ev)
    labels.append("terminal_v_hi")
    rows.append(-wv[None, :])
    rhs.append(v_lo + ev)
    labels.append("terminal_v_lo")

    a_mat = np.vstack(rows)
    b = np.asarray(rhs, dtype=float)
    cons = ConstraintSet(a_mat=a_mat, b=b)

    # Min-norm control hitting the target exactly is a good interior start.
    m_mat = np.vstack([wv, wx])
    rhs2 = np.array([-ev, -ex])
    u0 = m_mat.T @ np.linalg.solve(m_mat @ m_mat.T, rhs2)

    feas = find_feasible(cons, u0, tol=config.feas_tol)
    if feas.certified_infeasible:
        lin_v = cons.lin_values(feas.z)
        worst_lin = int(np.argmax(lin_v))
        raise PlannerInfeasible(labels[worst_lin], float(lin_v[worst_lin]))

    objective = Quadratic(P=dt * np.eye(n), r=np.zeros(n), s=0.0)
    result = solve_qcqp(
        objective, cons, feas.z, feas_tol=config.feas_tol, stat_tol=config.stat_tol
    )
    if not result.ok:
        raise SolverFailure(
            f"trajectory solve stalled: violation {result.max_violation:.3g}, "
            f"stationarity {result.stationarity:.3g}"
        )
    return trajectory_from_controls(initial, result.z, dt)


def fast_lane_plan_labels(m: int, slot: int) -> list[str]:
    """Labels of the planned fast-lane vehicles front to back, ego at its slot."""
    labels = [f"coop{i}" for i in range(1, slot + 1)]
    labels.append("ego")
    labels.extend(f"coop{i}" for i in range(slot + 1, m + 1))
    return labels


# Terminal slacks for sequential platoon planning: a leader exploiting the
# loose terminal tolerance would erode the room the committed-trajectory
# headway leaves its follower, and on a fully compressed chain any undershoot
# is fatal to the next program. The asymmetric interval forbids meaningful
# undershoot while leaving overshoot headroom; emitted terminal errors stay
# orders of magnitude inside the audited tolerances.
CHAIN_TERMINAL_SLACK = (1e-5, 1e-2, 1e-3, 1e-3)


def project_target_behind_leader(
    target: VehicleState, leader_terminal: float, safety: SafetyParams
) -> VehicleState:
    """Shift a follower's target back so the committed leader's landing fits it."""
    allowed = leader_terminal - safety.min_gap(target.speed) - 1e-9
    if target.position > allowed:
        return VehicleState(position=allowed, speed=target.speed)
    return target


def plan_all(plan, scenario: Scenario, config: PlannerConfig) -> list[Trajectory]:
    """Plan the fast-lane chain front to back, then the ego in its own lane.

    Each cooperator constrains against the committed trajectory directly
    ahead of it (the uncontrolled front vehicle for the first, when present).
    The ego stays in the slow lane until the horizon ends, so its in-phase
    leader is the slow vehicle only; the merge-slot gaps are guaranteed at
    the terminal time by the verified plan. Returns trajectories front to
    back with the ego inserted at its slot.
    """
    m = scenario.m
    slot = plan.slot.slot
    t_f = plan.t_f
    n = config.nodes
    times = np.linspace(0.0, t_f, n + 1)

    u_positions = scenario.uncontrolled.position + scenario.uncontrolled.speed * times
    lead = None
    if scenario.front is not None:
        lead = scenario.front.position + scenario.front.speed * times

    coop_trajs: list[Trajectory] = []
    for i in range(1, m + 1):
        target = plan.cooperator_terminals[i - 1]
        if isinstance(lead, Trajectory):
            target = project_target_behind_leader(
                target, float(lead.positions[-1]), scenario.safety
            )
        try:
            traj = plan_min_energy(
                scenario.cooperator(i),
                target,
                t_f,
                lead,
                scenario.limits,
                scenario.safety,
                config,
                trailing=scenario.back if i == m else None,
                terminal_slack=CHAIN_TERMINAL_SLACK,
            )
        except PlannerInfeasible as err:
            raise PlannerInfeasible(f"coop{i}:{err.constraint}", err.violation) from err
        coop_trajs.append(traj)
        lead = traj
    try:
        ego_traj = plan_min_energy(
            scenario.ego, plan.ego_terminal, t_f, u_positions,
            scenario.limits, scenario.safety, config,
            terminal_slack=CHAIN_TERMINAL_SLACK,
        )
    except PlannerInfeasible as err:
        raise PlannerInfeasible(f"ego:{err.constraint}", err.violation) from err
    return coop_trajs[:slot] + [ego_traj] + coop_trajs[slot:]


def safety_audit(trajectories: list[Trajectory], slot: int, scenario: Scenario) -> float:
    """Min over nodes and same-lane pairs of (gap - phi*v_follower - epsilon).

    Same-lane pairs are the fast-lane chain (consecutive cooperators, plus
    the uncontrolled bounding vehicles when present) and the ego against the
    slow vehicle. The ego's merge-slot gaps are a terminal-time contract of
    the coordinated plan, not an in-phase following relation, and are checked
    by the plan verifier instead.
    """
    if not trajectories:
        return float("inf")
    n = trajectories[0].nodes
    t_f = trajectories[0].t_f
    times = np.linspace(0.0, t_f, n + 1)
    phi, eps = scenario.safety.phi, scenario.safety.epsilon

    ego_traj = trajectories[slot]
    coop_trajs = trajectories[:slot] + trajectories[slot + 1 :]
    chain: list[tuple[np.ndarray, np.ndarray]] = []
    if scenario.front is not None:
        fx = scenario.front.position + scenario.front.speed * times
        chain.append((fx, np.full(n + 1, scenario.front.speed)))
    for traj in coop_trajs:
        chain.append((traj.positions, traj.speeds))
    if scenario.back is not None:
        bx = scenario.back.position + scenario.back.speed * times
        chain.append((bx, np.full(n + 1, scenario.back.speed)))

    worst = np.inf
    for (lead_x, _), (follow_x, follow_v) in zip(chain, chain[1:]):
        slack = lead_x - follow_x - phi * follow_v - eps
        worst = min(worst, float(np.min(slack)))

    ux = scenario.uncontrolled.position + scenario.uncontrolled.speed * times
    slack = ux - ego_traj.positions - phi * ego_traj.speeds - eps
    worst = min(worst, float(np.min(slack)))
    return worst
