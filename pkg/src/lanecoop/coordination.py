"""Terminal-state coordination: merge-slot enumeration over smooth subproblems.

The disjunctive merge-ordering constraints admit exactly m+1 monotone binary
assignments, one per merge slot, so the mixed-integer program is solved by
enumerating slots and solving a convex subproblem for each: quadratic
disruption objective, linear gap rows, speed boxes, and two convex parabolic
reachability constraints per free vehicle. A big-M formulation of the
disjunctions is kept alongside purely as a test oracle.

Two entry points: ``solve_problem1`` places the cooperators' terminal states
for a given terminal time and ego terminal state; ``solve_unified_p2``
additionally frees the terminal time (nested 1-D search) and the ego state,
which makes the whole coordination a single-shot solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .disruption import (
    DisruptionConfig,
    DisruptionReport,
    DisruptionWeights,
    report_from_states,
)
from .model import Scenario, VehicleState, predict_uncontrolled
from .reachability import (
    ReachabilityParams,
    boundary_coefficients,
    contains,
    reachable_speed_range,
    saturation_aux_coefficients,
)
from .solvers import ConstraintSet, Quadratic, find_feasible, golden_section, solve_qcqp


@dataclass(frozen=True)
class SlotAssignment:
    """Merge slot k in [0, m]: ego ends between cooperators k and k+1."""

    slot: int
    m: int

    def __post_init__(self) -> None:
        if not 0 <= self.slot <= self.m:
            raise ValueError(f"slot {self.slot} out of range 0..{self.m}")

    @property
    def binaries(self) -> tuple[int, ...]:
        return slot_to_binaries(self.slot, self.m)


def slot_to_binaries(slot: int, m: int) -> tuple[int, ...]:
    """Binary vector with B_i = 1 iff the ego ends ahead of cooperator i."""
    if not 0 <= slot <= m:
        raise ValueError(f"slot {slot} out of range 0..{m}")
    return tuple(1 if i > slot else 0 for i in range(1, m + 1))


@dataclass(frozen=True)
class SolverConfig:
    t_lb: float = 0.5
    t_max: float = 20.0
    grid_points: int = 40
    refine_iters: int = 16
    feas_tol: float = 1e-8
    stat_tol: float = 1e-8
    multi_start: int = 2
    big_m: float = 1e5  # test-only; slots are enumerated in the solve path
    # Margins subtracted from the reachable-set bounds and added to the gap
    # rows so terminal states stay strictly interior: exactly pinched
    # configurations are valid at the terminal time but leave the sequential
    # trajectory planner no room for its in-phase paths.
    reach_margin: float = 0.1
    gap_margin: float = 0.05

    def __post_init__(self) -> None:
        if not 0.0 < self.t_lb < self.t_max:
            raise ValueError("need 0 < t_lb < t_max")
        if self.grid_points < 2:
            raise ValueError("need at least 2 grid points")
        if not (self.feas_tol > 0.0 and self.stat_tol > 0.0):
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class TerminalPlan:
    """Coordinated terminal states at t_f plus the achieved disruption."""

    t_f: float
    slot: SlotAssignment
    ego_terminal: VehicleState
    cooperator_terminals: tuple[VehicleState, ...]
    report: DisruptionReport
    objective: float
    unified: bool = False


class CoordinationInfeasible(Exception):
    """No feasible slot (and, for the unified solve, no feasible time) exists."""


class CoordinationSolverFailure(Exception):
    """Inner solves exhausted their budget without certifying anything."""


class PlanVerificationError(Exception):
    pass


# ---------------------------------------------------------------------------
# Constraint assembly


@dataclass(frozen=True)
class TerminalSystem:
    """Gap rows, speed boxes, and reachability quadratics at one (slot, t_f)."""

    var_names: tuple[str, ...]
    a_mat: np.ndarray
    b: np.ndarray
    row_labels: tuple[str, ...]
    quads: tuple[Quadratic, ...]
    quad_labels: tuple[str, ...]
    t_f: float
    slot: Optional[int]
    ego_free: bool
    const_violations: tuple[tuple[str, float], ...]

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    def constraint_set(self) -> ConstraintSet:
        return ConstraintSet(a_mat=self.a_mat, b=self.b, quads=self.quads)

    def lin_residuals(self, z: np.ndarray) -> dict[str, float]:
        vals = self.a_mat @ z - self.b
        return dict(zip(self.row_labels, (float(v) for v in vals)))


class _SystemBuilder:
    def __init__(self, scenario: Scenario, t_f: float, ego_free: bool,
                 ego_terminal: Optional[VehicleState], reach_margin: float = 0.0,
                 gap_margin: float = 0.0):
        self.scenario = scenario
        self.t_f = t_f
        self.ego_free = ego_free
        self.reach_margin = reach_margin
        self.gap_margin = gap_margin
        m = scenario.m
        free = [f"coop{i}" for i in range(1, m + 1)]
        if ego_free:
            free.append("ego")
        names = []
        for key in free:
            names.extend((f"x:{key}", f"v:{key}"))
        # Auxiliary peak/valley speeds for the saturation bounds sit after the
        # state block so state indices are independent of them.
        for key in free:
            names.extend((f"pk:{key}", f"vl:{key}"))
        self.free_vehicles = tuple(free)
        self.var_names = tuple(names)
        self.n = len(names)
        self.rows: list[np.ndarray] = []
        self.rhs: list[float] = []
        self.labels: list[str] = []
        self.quads: list[Quadratic] = []
        self.quad_labels: list[str] = []
        self.const_violations: list[tuple[str, float]] = []
        self.ego_terminal = ego_terminal
        self.phi = scenario.safety.phi
        self.eps = scenario.safety.epsilon

    def idx(self, key: str) -> tuple[int, int]:
        base = self.var_names.index(f"x:{key}")
        return base, base + 1

    def aux_idx(self, key: str) -> tuple[int, int]:
        base = self.var_names.index(f"pk:{key}")
        return base, base + 1

    def _ref(self, key: str):
        """('var', x_idx, v_idx) or ('const', x, v) for a fast-lane entity at t_f."""
        s = self.scenario
        if key == "ego":
            if self.ego_free:
                return ("var", *self.idx("ego"))
            assert self.ego_terminal is not None
            return ("const", self.ego_terminal.position, self.ego_terminal.speed)
        if key == "F":
            st = predict_uncontrolled(s.front, self.t_f)
            return ("const", st.position, st.speed)
        if key == "B":
            st = predict_uncontrolled(s.back, self.t_f)
            return ("const", st.position, st.speed)
        if key == "U":
            st = predict_uncontrolled(s.uncontrolled, self.t_f)
            return ("const", st.position, st.speed)
        return ("var", *self.idx(key))

    def gap(self, lead_key: str, follow_key: str, label: str, m_shift: float = 0.0) -> None:
        """Add lead_x - follow_x >= phi * follow_v + eps - m_shift as a row."""
        lead = self._ref(lead_key)
        follow = self._ref(follow_key)
        a = np.zeros(self.n)
        c = self.eps + self.gap_margin - m_shift
        if lead[0] == "var":
            a[lead[1]] -= 1.0
        else:
            c -= lead[1]
        if follow[0] == "var":
            a[follow[1]] += 1.0
            a[follow[2]] += self.phi
        else:
            c += follow[1] + self.phi * follow[2]
        if not np.any(a):
            if c > 1e-9:
                self.const_violations.append((label, float(c)))
            return
        self.rows.append(a)
        self.rhs.append(-c)
        self.labels.append(label)

    def speed_box(self, key: str) -> None:
        _, iv = self.idx(key)
        lim = self.scenario.limits
        a = np.zeros(self.n)
        a[iv] = 1.0
        self.rows.append(a)
        self.rhs.append(lim.v_max)
        self.labels.append(f"vmax:{key}")
        a = np.zeros(self.n)
        a[iv] = -1.0
        self.rows.append(a)
        self.rhs.append(-lim.v_min)
        self.labels.append(f"vmin:{key}")

    def reach(self, key: str, origin: VehicleState) -> None:
        params = ReachabilityParams.from_limits(self.scenario.limits)
        lim = self.scenario.limits
        upper, lower = boundary_coefficients(origin, params, self.t_f)
        ix, iv = self.idx(key)
        for tag, (p_vv, r_v, r_x, s) in (("reach_up", upper), ("reach_lo", lower)):
            p_mat = np.zeros((self.n, self.n))
            p_mat[iv, iv] = p_vv
            r = np.zeros(self.n)
            r[iv] = r_v
            r[ix] = r_x
            self.quads.append(Quadratic(P=p_mat, r=r, s=s + self.reach_margin * abs(r_x)))
            self.quad_labels.append(f"{tag}:{key}")

        # Saturation-aware displacement cuts keep emitted terminal states
        # attainable under the node-wise speed box the planner enforces.
        ipk, ivl = self.aux_idx(key)
        sat_up, sat_lo = saturation_aux_coefficients(origin, params, self.t_f)
        slot_of = {"x": ix, "v": iv}
        for tag, spec, iaux in (("sat_up", sat_up, ipk), ("sat_lo", sat_lo, ivl)):
            slot_of["aux"] = iaux
            p_mat = np.zeros((self.n, self.n))
            for (a, b), val in spec["P"].items():
                ia, ib = slot_of[a], slot_of[b]
                p_mat[ia, ib] += val
                if ia != ib:
                    p_mat[ib, ia] += val
            r = np.zeros(self.n)
            for a, val in spec["r"].items():
                r[slot_of[a]] += val
            self.quads.append(
                Quadratic(P=p_mat, r=r, s=spec["s"] + self.reach_margin * abs(spec["r"]["x"]))
            )
            self.quad_labels.append(f"{tag}:{key}")
        row = np.zeros(self.n)
        row[ipk] = 1.0
        self.rows.append(row)
        self.rhs.append(lim.v_max)
        self.labels.append(f"pkmax:{key}")
        row = np.zeros(self.n)
        row[ivl] = -1.0
        self.rows.append(row)
        self.rhs.append(-lim.v_min)
        self.labels.append(f"vlmin:{key}")

    def build(self, slot: Optional[int]) -> TerminalSystem:
        n_rows = len(self.rows)
        a_mat = np.vstack(self.rows) if n_rows else np.zeros((0, self.n))
        return TerminalSystem(
            var_names=self.var_names,
            a_mat=a_mat,
            b=np.asarray(self.rhs, dtype=float),
            row_labels=tuple(self.labels),
            quads=tuple(self.quads),
            quad_labels=tuple(self.quad_labels),
            t_f=self.t_f,
            slot=slot,
            ego_free=self.ego_free,
            const_violations=tuple(self.const_violations),
        )


def _common_rows(builder: _SystemBuilder) -> None:
    s = builder.scenario
    m = s.m
    if s.front is not None and m >= 1:
        builder.gap("F", "coop1", "gap:F>coop1")
    if s.back is not None and m >= 1:
        builder.gap(f"coop{m}", "B", f"gap:coop{m}>B")
    if s.front is not None:
        builder.gap("F", "ego", "gap:F>ego")
    if s.back is not None:
        builder.gap("ego", "B", "gap:ego>B")
    for j in range(1, m):
        builder.gap(f"coop{j}", f"coop{j + 1}", f"chain:coop{j}>coop{j + 1}")


def _boxes_and_reach(builder: _SystemBuilder) -> None:
    s = builder.scenario
    for i in range(1, s.m + 1):
        builder.speed_box(f"coop{i}")
        builder.reach(f"coop{i}", s.cooperator(i))
    if builder.ego_free:
        builder.speed_box("ego")
        builder.reach("ego", s.ego)


def build_constraints(
    scenario: Scenario,
    slot: int,
    t_f: float,
    ego_free: bool,
    ego_terminal: Optional[VehicleState] = None,
    reach_margin: float = 0.0,
    gap_margin: float = 0.0,
) -> TerminalSystem:
    """Terminal constraint system at one (slot, t_f), disjunctions resolved.

    With ``ego_free`` the ego terminal state joins the variables, its
    reachability constraint is added, and the terminal gap behind the slow
    vehicle is enforced; otherwise ``ego_terminal`` is folded in as constants.
    ``reach_margin`` uniformly tightens the reachable-set position bounds and
    ``gap_margin`` the rear-end gap rows.
    """
    if not ego_free and ego_terminal is None:
        raise ValueError("ego_terminal required when the ego state is fixed")
    m = scenario.m
    if not 0 <= slot <= m:
        raise ValueError(f"slot {slot} out of range 0..{m}")
    builder = _SystemBuilder(scenario, t_f, ego_free, ego_terminal, reach_margin, gap_margin)
    _common_rows(builder)
    for i in range(1, m + 1):
        if i > slot:
            builder.gap("ego", f"coop{i}", f"order:ego>coop{i}")
        else:
            builder.gap(f"coop{i}", "ego", f"order:coop{i}>ego")
    if ego_free:
        builder.gap("U", "ego", "gap:U>ego")
    _boxes_and_reach(builder)
    return builder.build(slot)


def build_big_m_system(
    scenario: Scenario,
    binaries: Sequence[int],
    t_f: float,
    big_m: float,
    ego_free: bool,
    ego_terminal: Optional[VehicleState] = None,
) -> TerminalSystem:
    """Big-M form of the disjunctive ordering constraints (test oracle only)."""
    m = scenario.m
    if len(binaries) != m:
        raise ValueError(f"need {m} binaries, got {len(binaries)}")
    builder = _SystemBuilder(scenario, t_f, ego_free, ego_terminal)
    _common_rows(builder)
    for i, b_i in enumerate(binaries, start=1):
        builder.gap("ego", f"coop{i}", f"bigM_ego_ahead:coop{i}", m_shift=(1 - b_i) * big_m)
        builder.gap(f"coop{i}", "ego", f"bigM_coop_ahead:coop{i}", m_shift=b_i * big_m)
    if ego_free:
        builder.gap("U", "ego", "gap:U>ego")
    _boxes_and_reach(builder)
    return builder.build(None)


# ---------------------------------------------------------------------------
# Objectives and inner solves


def weights_for_scenario(scenario: Scenario, dcfg: DisruptionConfig) -> dict[str, DisruptionWeights]:
    out = {
        f"coop{i}": dcfg.for_vehicle(scenario.cooperator(i).speed, scenario.limits)
        for i in range(1, scenario.m + 1)
    }
    out["ego"] = dcfg.for_vehicle(scenario.ego.speed, scenario.limits)
    return out


def terminal_objective(
    scenario: Scenario,
    t_f: float,
    weights: dict[str, DisruptionWeights],
    ego_free: bool,
) -> Quadratic:
    """Sum of per-vehicle disruption quadratics over the system's variables.

    The saturation auxiliaries carry a vanishing regularizer anchoring them at
    their bound, which keeps the Hessian definite and the solution unique
    without measurably perturbing the disruption value.
    """
    m = scenario.m
    n_free = m + (1 if ego_free else 0)
    n = 4 * n_free
    q_diag = np.zeros(n)
    r = np.zeros(n)
    s = 0.0

    def add(ix: int, iv: int, origin: VehicleState, w: DisruptionWeights) -> None:
        nonlocal s
        ex = origin.position + origin.speed * t_f
        q_diag[ix] += 2.0 * w.gamma_x
        r[ix] -= 2.0 * w.gamma_x * ex
        s += w.gamma_x * ex * ex
        q_diag[iv] += 2.0 * w.gamma_v
        r[iv] -= 2.0 * w.gamma_v * w.v_d
        s += w.gamma_v * w.v_d * w.v_d

    for i in range(1, m + 1):
        add(2 * (i - 1), 2 * (i - 1) + 1, scenario.cooperator(i), weights[f"coop{i}"])
    if ego_free:
        add(2 * m, 2 * m + 1, scenario.ego, weights["ego"])

    reg = 1e-10
    lim = scenario.limits
    for j in range(n_free):
        ipk = 2 * n_free + 2 * j
        ivl = ipk + 1
        q_diag[ipk] = 2.0 * reg
        r[ipk] = -2.0 * reg * lim.v_max
        q_diag[ivl] = 2.0 * reg
        r[ivl] = -2.0 * reg * lim.v_min
    return Quadratic(P=np.diag(q_diag), r=r, s=s)


def default_starts(
    scenario: Scenario, t_f: float, v_d: float, ego_free: bool
) -> list[np.ndarray]:
    """Constant-speed extrapolation and the v_d-tracking ramp point."""
    params = ReachabilityParams.from_limits(scenario.limits)
    vehicles = [scenario.cooperator(i) for i in range(1, scenario.m + 1)]
    if ego_free:
        vehicles.append(scenario.ego)

    coast = []
    track = []
    for veh in vehicles:
        coast.extend((veh.position + veh.speed * t_f, veh.speed))
        v_lo, v_hi = reachable_speed_range(veh, params, t_f, scenario.limits)
        v_t = min(max(v_d, v_lo), v_hi)
        track.extend((veh.position + 0.5 * (veh.speed + v_t) * t_f, v_t))
    aux = []
    for _ in vehicles:
        aux.extend((scenario.limits.v_max, scenario.limits.v_min))
    return [np.asarray(coast + aux), np.asarray(track + aux)]


@dataclass
class InnerOutcome:
    status: str  # "optimal" | "infeasible" | "solver-failure"
    z: Optional[np.ndarray] = None
    value: float = math.inf
    stationarity: float = math.inf
    max_violation: float = math.inf
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def inner_solve(
    system: TerminalSystem,
    objective: Quadratic,
    starts: Sequence[np.ndarray],
    config: SolverConfig,
) -> InnerOutcome:
    """Solve one slot subproblem; certify infeasibility when no start recovers."""
    if system.const_violations:
        worst = max(system.const_violations, key=lambda kv: kv[1])
        return InnerOutcome(status="infeasible", reason=f"{worst[0]} violated by {worst[1]:.3g}")
    if system.n_vars == 0:
        return InnerOutcome(status="optimal", z=np.zeros(0), value=objective.s,
                            stationarity=0.0, max_violation=0.0)
    cons = system.constraint_set()
    all_infeasible = True
    saw_failure = False
    for z0 in starts[: max(1, config.multi_start)]:
        feas = find_feasible(cons, z0, tol=config.feas_tol)
        if feas.certified_infeasible:
            continue
        all_infeasible = False
        result = solve_qcqp(
            objective, cons, feas.z, feas_tol=config.feas_tol, stat_tol=config.stat_tol
        )
        if not result.ok:
            saw_failure = True
            continue
        # The subproblem is convex, so the first converged start is global.
        return InnerOutcome(
            status="optimal",
            z=result.z,
            value=result.objective,
            stationarity=result.stationarity,
            max_violation=result.max_violation,
        )
    if all_infeasible:
        return InnerOutcome(status="infeasible", reason="no start reached the feasible set")
    if saw_failure:
        return InnerOutcome(status="solver-failure", reason="iteration budget exhausted")
    return InnerOutcome(status="infeasible", reason="no feasible start")


def _states_from_z(z: np.ndarray, m: int) -> list[VehicleState]:
    return [VehicleState(position=float(z[2 * i]), speed=float(z[2 * i + 1])) for i in range(m)]


# ---------------------------------------------------------------------------
# Problem 1: terminal states of the cooperators, ego terminal given


def solve_problem1(
    scenario: Scenario,
    t_f_star: float,
    ego_terminal: VehicleState,
    dcfg: DisruptionConfig,
    config: SolverConfig = SolverConfig(),
) -> TerminalPlan:
    """Globally minimal cooperator disruption over all merge slots at t_f_star."""
    params = ReachabilityParams.from_limits(scenario.limits)
    if not contains(
        ego_terminal.position, ego_terminal.speed, t_f_star, scenario.ego, params,
        scenario.limits, tol=1e-6,
    ):
        raise ValueError("ego terminal state is not reachable at t_f_star")

    m = scenario.m
    weights = weights_for_scenario(scenario, dcfg)
    objective = terminal_objective(scenario, t_f_star, weights, ego_free=False)
    starts = default_starts(scenario, t_f_star, dcfg.v_d, ego_free=False)

    candidates: list[tuple[float, int, np.ndarray]] = []
    saw_failure = False
    for slot in range(m + 1):
        system = build_constraints(scenario, slot, t_f_star, ego_free=False,
                                   ego_terminal=ego_terminal,
                                   reach_margin=config.reach_margin,
                                   gap_margin=config.gap_margin)
        outcome = inner_solve(system, objective, starts, config)
        if outcome.ok:
            candidates.append((outcome.value, slot, outcome.z))
        elif outcome.status == "solver-failure":
            saw_failure = True
    if not candidates:
        if saw_failure:
            raise CoordinationSolverFailure(f"no slot solved at t_f={t_f_star:.3f}")
        raise CoordinationInfeasible(f"all slots infeasible at t_f={t_f_star:.3f}")

    value, slot, z = min(candidates, key=lambda c: (c[0], c[1]))
    assert all(value <= v + 1e-12 for v, _, _ in candidates)
    finals = _states_from_z(z, m)
    report = report_from_states(
        [scenario.cooperator(i) for i in range(1, m + 1)],
        finals,
        t_f_star,
        [weights[f"coop{i}"] for i in range(1, m + 1)],
        slot,
    )
    plan = TerminalPlan(
        t_f=t_f_star,
        slot=SlotAssignment(slot=slot, m=m),
        ego_terminal=ego_terminal,
        cooperator_terminals=tuple(finals),
        report=report,
        objective=value,
        unified=False,
    )
    verify_plan(plan, scenario, tol=1e-6)
    return plan


# ---------------------------------------------------------------------------
# Problem 2: unified coordination with free terminal time and ego state


def _unified_search(
    scenario: Scenario, dcfg: DisruptionConfig, config: SolverConfig
) -> list[tuple[float, int, float, np.ndarray]]:
    """Grid-plus-refinement search over t_f; returns (total, slot, t_f, z) sorted."""
    m = scenario.m
    weights = weights_for_scenario(scenario, dcfg)
    evaluations: dict[float, tuple[float, int, np.ndarray]] = {}
    warm: dict[int, np.ndarray] = {}

    def evaluate(t_f: float) -> float:
        objective = terminal_objective(scenario, t_f, weights, ego_free=True)
        cold = default_starts(scenario, t_f, dcfg.v_d, ego_free=True)
        best: Optional[tuple[float, int, np.ndarray]] = None
        for slot in range(m + 1):
            system = build_constraints(scenario, slot, t_f, ego_free=True,
                                       reach_margin=config.reach_margin,
                                       gap_margin=config.gap_margin)
            starts = ([warm[slot]] if slot in warm else []) + cold
            outcome = inner_solve(system, objective, starts, config)
            if outcome.ok:
                warm[slot] = outcome.z
                total = outcome.value + dcfg.gamma_t * t_f
                if best is None or (total, slot) < (best[0], best[1]):
                    best = (total, slot, outcome.z)
        if best is None:
            return math.inf
        evaluations[t_f] = best
        return best[0]

    grid = np.linspace(config.t_lb, config.t_max, config.grid_points)
    grid_values = []
    best_total = math.inf
    for t in grid:
        # Disruption is non-negative, so once gamma_t * t alone exceeds the
        # best total seen, no larger grid time can win.
        if dcfg.gamma_t * float(t) >= best_total:
            grid_values.append(math.inf)
            continue
        val = evaluate(float(t))
        grid_values.append(val)
        best_total = min(best_total, val)
    best_idx = int(np.argmin(grid_values))
    if math.isinf(grid_values[best_idx]):
        raise CoordinationInfeasible(
            f"no feasible (t_f, slot) in [{config.t_lb}, {config.t_max}]"
        )
    if config.refine_iters > 0:
        lo = float(grid[max(best_idx - 1, 0)])
        hi = float(grid[min(best_idx + 1, len(grid) - 1)])
        golden_section(evaluate, lo, hi, iters=config.refine_iters)

    ranked = [
        (total, slot, t_f, z)
        for t_f, (total, slot, z) in evaluations.items()
    ]
    ranked.sort(key=lambda c: (c[0], c[1], c[2]))
    # Collapse near-identical refinement evaluations so the ranked list spans
    # genuinely different (slot, time) regions.
    seen: set[tuple[int, int]] = set()
    distinct = []
    for cand in ranked:
        key = (cand[1], int(round(cand[2] * 4)))
        if key in seen:
            continue
        seen.add(key)
        distinct.append(cand)
    return distinct


def _unified_plan_from_candidate(
    scenario: Scenario,
    dcfg: DisruptionConfig,
    candidate: tuple[float, int, float, np.ndarray],
) -> TerminalPlan:
    total, slot, t_f, z = candidate
    m = scenario.m
    weights = weights_for_scenario(scenario, dcfg)
    finals = _states_from_z(z, m)
    ego_terminal = VehicleState(position=float(z[2 * m]), speed=float(z[2 * m + 1]))
    report = report_from_states(
        [scenario.cooperator(i) for i in range(1, m + 1)],
        finals,
        t_f,
        [weights[f"coop{i}"] for i in range(1, m + 1)],
        slot,
    )
    plan = TerminalPlan(
        t_f=t_f,
        slot=SlotAssignment(slot=slot, m=m),
        ego_terminal=ego_terminal,
        cooperator_terminals=tuple(finals),
        report=report,
        objective=total,
        unified=True,
    )
    verify_plan(plan, scenario, tol=1e-6)
    return plan


def solve_unified_p2(
    scenario: Scenario,
    dcfg: DisruptionConfig,
    config: SolverConfig = SolverConfig(),
) -> TerminalPlan:
    """Single-shot coordination over terminal time, merge slot, and all states.

    The terminal time is handled by a coarse grid followed by golden-section
    refinement around the best grid point; slots are enumerated inside each
    time evaluation. Completes in one outer pass by construction.
    """
    ranked = _unified_search(scenario, dcfg, config)
    return _unified_plan_from_candidate(scenario, dcfg, ranked[0])


def unified_plan_candidates(
    scenario: Scenario,
    dcfg: DisruptionConfig,
    config: SolverConfig = SolverConfig(),
    limit: int = 8,
) -> list[TerminalPlan]:
    """The best evaluated (t_f, slot) solutions of the unified solve, ranked.

    All candidates come from the same single search pass; callers that need a
    downstream-consistent plan (e.g. one the sequential trajectory planner can
    realize) walk the list in order.
    """
    ranked = _unified_search(scenario, dcfg, config)
    plans: list[TerminalPlan] = []
    for candidate in ranked[: max(1, limit)]:
        try:
            plans.append(_unified_plan_from_candidate(scenario, dcfg, candidate))
        except PlanVerificationError:  # pragma: no cover - solver guarantees
            continue
    if not plans:
        raise CoordinationInfeasible("no verifiable unified candidate")
    return plans


# ---------------------------------------------------------------------------
# Independent plan verification


def plan_violations(plan: TerminalPlan, scenario: Scenario, tol: float = 1e-6) -> list[str]:
    """Re-check every terminal constraint of a plan by direct evaluation.

    This path shares no matrix assembly with the solvers: gaps, speed boxes,
    and reachability membership are recomputed from the stored states.
    """
    out: list[str] = []
    m = scenario.m
    slot = plan.slot.slot
    t_f = plan.t_f
    safety = scenario.safety
    lim = scenario.limits
    params = ReachabilityParams.from_limits(lim)

    def check_gap(lead: VehicleState, follow: VehicleState, label: str) -> None:
        slack = lead.position - follow.position - safety.min_gap(follow.speed)
        if slack < -tol:
            out.append(f"{label}: gap short by {-slack:.3g} m")

    finals = {f"coop{i}": plan.cooperator_terminals[i - 1] for i in range(1, m + 1)}
    finals["ego"] = plan.ego_terminal
    order: list[tuple[str, VehicleState]] = []
    if scenario.front is not None:
        order.append(("F", predict_uncontrolled(scenario.front, t_f)))
    for i in range(1, slot + 1):
        order.append((f"coop{i}", finals[f"coop{i}"]))
    order.append(("ego", finals["ego"]))
    for i in range(slot + 1, m + 1):
        order.append((f"coop{i}", finals[f"coop{i}"]))
    if scenario.back is not None:
        order.append(("B", predict_uncontrolled(scenario.back, t_f)))

    for (ll, ls), (fl, fs) in zip(order, order[1:]):
        check_gap(ls, fs, f"{ll}>{fl}")
    for j in range(1, m):
        check_gap(finals[f"coop{j}"], finals[f"coop{j + 1}"], f"chain coop{j}>coop{j + 1}")
    if scenario.front is not None:
        check_gap(predict_uncontrolled(scenario.front, t_f), finals["ego"], "F>ego")
    if scenario.back is not None:
        check_gap(finals["ego"], predict_uncontrolled(scenario.back, t_f), "ego>B")
    if plan.unified:
        check_gap(predict_uncontrolled(scenario.uncontrolled, t_f), finals["ego"], "U>ego")

    initials = {f"coop{i}": scenario.cooperator(i) for i in range(1, m + 1)}
    initials["ego"] = scenario.ego
    for label, final in finals.items():
        if not lim.v_min - tol <= final.speed <= lim.v_max + tol:
            out.append(f"{label}: terminal speed {final.speed:.3f} outside box")
        if not contains(final.position, final.speed, t_f, initials[label], params, lim, tol=tol):
            out.append(f"{label}: terminal state not reachable at t_f={t_f:.3f}")
    return out


def verify_plan(plan: TerminalPlan, scenario: Scenario, tol: float = 1e-6) -> None:
    problems = plan_violations(plan, scenario, tol=tol)
    if problems:
        raise PlanVerificationError("; ".join(problems))
