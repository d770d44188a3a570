import dataclasses

import numpy as np
import pytest

from lanecoop.coordination import (
    CoordinationInfeasible,
    PlanVerificationError,
    SlotAssignment,
    SolverConfig,
    TerminalPlan,
    build_big_m_system,
    build_constraints,
    default_starts,
    inner_solve,
    plan_violations,
    slot_to_binaries,
    solve_problem1,
    solve_unified_p2,
    terminal_objective,
    unified_plan_candidates,
    verify_plan,
    weights_for_scenario,
)
from lanecoop.disruption import DisruptionConfig
from lanecoop.model import ActuationLimits, SafetyParams, Scenario, VehicleState
from lanecoop.reachability import ReachabilityParams, contains
from oracles import brute_force_problem1, brute_force_unified

LIMITS = ActuationLimits(u_min=-7.0, u_max=3.3, v_min=5.0, v_max=35.0)
SAFETY = SafetyParams(epsilon=10.0, phi=0.2)
FAST_CFG = SolverConfig(grid_points=20, refine_iters=8)


def scenario_with(cooperators, ego=VehicleState(0.0, 23.0), u=VehicleState(45.0, 20.0)):
    return Scenario(ego=ego, uncontrolled=u, cooperators=cooperators,
                    limits=LIMITS, safety=SAFETY)


class TestSlotBinaries:
    def test_interior_slot(self):
        assert slot_to_binaries(1, 3) == (0, 1, 1)

    def test_ego_ahead_of_all(self):
        assert slot_to_binaries(0, 3) == (1, 1, 1)

    def test_ego_behind_all(self):
        assert slot_to_binaries(3, 3) == (0, 0, 0)

    def test_monotone_non_decreasing(self):
        for m in range(7):
            for slot in range(m + 1):
                b = slot_to_binaries(slot, m)
                assert all(x <= y for x, y in zip(b, b[1:]))

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            slot_to_binaries(4, 3)
        with pytest.raises(ValueError):
            SlotAssignment(slot=-1, m=2)


class TestBuildConstraints:
    def test_single_cooperator_slot_behind_ego(self):
        s = scenario_with(
            (VehicleState(30.0, 28.0),),
            u=VehicleState(45.0, 20.0),
        )
        s = dataclasses.replace(
            s, front=VehicleState(80.0, 30.0), back=VehicleState(-60.0, 28.0)
        )
        system = build_constraints(s, slot=1, t_f=2.0, ego_free=False,
                                   ego_terminal=VehicleState(50.0, 25.0))
        labels = set(system.row_labels)
        assert "gap:F>coop1" in labels
        assert "order:coop1>ego" in labels
        assert {"reach_up:coop1", "reach_lo:coop1"} <= set(system.quad_labels)
        assert {"vmax:coop1", "vmin:coop1"} <= labels
        # the ego-vs-back gap has only constants; valid here, so no row
        assert system.const_violations == ()

    def test_case_two_ordering_rows(self):
        # Slot 1 of three cooperators: the slot leader keeps the ego's
        # headway, the ego keeps the slot follower's headway.
        s = scenario_with(
            (VehicleState(30.0, 28.0), VehicleState(-5.0, 28.0), VehicleState(-40.0, 28.0))
        )
        ego_t = VehicleState(48.0, 26.0)
        system = build_constraints(s, slot=1, t_f=2.0, ego_free=False, ego_terminal=ego_t)
        rows = dict(zip(system.row_labels, zip(system.a_mat, system.b)))

        a, b = rows["order:coop1>ego"]
        # -x_1 <= -(eps + x_C + phi v_C)
        assert a[0] == -1.0 and not np.any(np.delete(a, 0))
        assert b == pytest.approx(-(10.0 + ego_t.position + 0.2 * ego_t.speed))

        a, b = rows["order:ego>coop2"]
        # x_2 + phi v_2 <= x_C - eps
        assert a[2] == 1.0 and a[3] == pytest.approx(0.2)
        assert b == pytest.approx(ego_t.position - 10.0)

        assert "chain:coop1>coop2" in rows and "chain:coop2>coop3" in rows

    def test_unified_adds_ego_rows(self):
        s = scenario_with((VehicleState(30.0, 28.0),))
        system = build_constraints(s, slot=0, t_f=2.0, ego_free=True)
        assert "gap:U>ego" in system.row_labels
        assert {"reach_up:ego", "reach_lo:ego"} <= set(system.quad_labels)
        assert "x:ego" in system.var_names

    def test_constant_violation_detected(self):
        s = scenario_with((VehicleState(30.0, 28.0),))
        s = dataclasses.replace(s, front=VehicleState(60.0, 28.0))
        # ego terminal ahead of F's prediction: the all-constant row fails
        system = build_constraints(s, slot=1, t_f=2.0, ego_free=False,
                                   ego_terminal=VehicleState(130.0, 28.0))
        assert any(label == "gap:F>ego" for label, _ in system.const_violations)


class TestBigMEquivalence:
    def test_active_side_matches_and_twin_is_slack(self, rng):
        s = scenario_with(
            (VehicleState(30.0, 28.0), VehicleState(-5.0, 28.0), VehicleState(-40.0, 28.0))
        )
        ego_t = VehicleState(48.0, 26.0)
        big_m = 1e5
        for slot in range(4):
            plain = build_constraints(s, slot, 2.0, False, ego_t)
            binaries = slot_to_binaries(slot, 3)
            bigm = build_big_m_system(s, binaries, 2.0, big_m, False, ego_t)
            p_rows = dict(zip(plain.row_labels, zip(plain.a_mat, plain.b)))
            m_rows = dict(zip(bigm.row_labels, zip(bigm.a_mat, bigm.b)))
            for i, b_i in enumerate(binaries, start=1):
                if b_i == 1:
                    active, twin = f"bigM_ego_ahead:coop{i}", f"bigM_coop_ahead:coop{i}"
                    plain_label = f"order:ego>coop{i}"
                else:
                    active, twin = f"bigM_coop_ahead:coop{i}", f"bigM_ego_ahead:coop{i}"
                    plain_label = f"order:coop{i}>ego"
                np.testing.assert_array_equal(m_rows[active][0], p_rows[plain_label][0])
                assert m_rows[active][1] == p_rows[plain_label][1]
                # on random points the twin is slack by roughly M
                for _ in range(20):
                    z = rng.uniform(-100, 100, size=plain.a_mat.shape[1])
                    twin_resid = float(m_rows[twin][0] @ z - m_rows[twin][1])
                    assert twin_resid <= -big_m / 2

    def test_substituted_binary_recovers_ordering_row(self):
        s = scenario_with((VehicleState(30.0, 28.0),))
        ego_t = VehicleState(55.0, 26.0)
        bigm = build_big_m_system(s, (1,), 2.0, 1e5, False, ego_t)
        plain = build_constraints(s, 0, 2.0, False, ego_t)
        m_rows = dict(zip(bigm.row_labels, zip(bigm.a_mat, bigm.b)))
        p_rows = dict(zip(plain.row_labels, zip(plain.a_mat, plain.b)))
        np.testing.assert_array_equal(
            m_rows["bigM_ego_ahead:coop1"][0], p_rows["order:ego>coop1"][0]
        )
        assert m_rows["bigM_ego_ahead:coop1"][1] == p_rows["order:ego>coop1"][1]


class TestInnerSolve:
    def test_zero_disruption_when_cruising_is_feasible(self):
        s = scenario_with((VehicleState(80.0, 26.0),))
        dcfg = DisruptionConfig(v_d=26.0)
        weights = weights_for_scenario(s, dcfg)
        t_f = 2.0
        system = build_constraints(s, 1, t_f, False, VehicleState(46.0, 23.0))
        objective = terminal_objective(s, t_f, weights, ego_free=False)
        outcome = inner_solve(system, objective, default_starts(s, t_f, 26.0, False),
                              SolverConfig())
        assert outcome.ok
        assert outcome.value <= 1e-6

    def test_certified_infeasibility_at_tiny_horizon(self):
        # Gap demand far beyond what anyone can move in 0.5 s.
        s = scenario_with((VehicleState(16.0, 25.0), VehicleState(0.5, 25.0)))
        dcfg = DisruptionConfig(v_d=25.0)
        ego_t = VehicleState(8.0, 24.0)
        with pytest.raises(CoordinationInfeasible):
            solve_problem1(s, 0.5, ego_t, dcfg, FAST_CFG)


class TestProblem1:
    def test_empty_cooperative_set(self):
        s = scenario_with(())
        plan = solve_problem1(s, 2.0, VehicleState(47.0, 24.0), DisruptionConfig(v_d=25.0))
        assert plan.objective == 0.0
        assert plan.slot.slot == 0
        assert plan.cooperator_terminals == ()

    def test_free_slot_found_with_zero_disruption(self):
        # Two cooperators straddling a huge gap around the ego's terminal.
        s = scenario_with(
            (VehicleState(100.0, 25.0), VehicleState(-80.0, 25.0)),
            u=VehicleState(60.0, 20.0),
        )
        plan = solve_problem1(s, 2.0, VehicleState(48.0, 25.0), DisruptionConfig(v_d=25.0))
        assert plan.slot.slot == 1
        assert plan.objective <= 1e-6
        assert plan.report.global_total <= 1e-6

    def test_matches_brute_force_grid(self):
        s = scenario_with(
            (VehicleState(18.0, 27.0), VehicleState(-18.0, 26.5)),
            u=VehicleState(45.0, 20.0),
        )
        dcfg = DisruptionConfig(v_d=27.0)
        t_f = 2.2
        ego_t = VehicleState(51.0, 25.5)
        cfg = SolverConfig()
        plan = solve_problem1(s, t_f, ego_t, dcfg, cfg)
        brute = brute_force_problem1(
            s, t_f, ego_t, dcfg, dx=0.1, dv=0.05,
            reach_margin=cfg.reach_margin, gap_margin=cfg.gap_margin,
        )
        assert plan.objective <= brute + 1e-9
        assert abs(plan.objective - brute) <= 0.05 * max(brute, 1e-3)

    def test_unreachable_ego_terminal_rejected(self):
        s = scenario_with((VehicleState(40.0, 28.0),))
        with pytest.raises(ValueError, match="reachable"):
            solve_problem1(s, 1.0, VehicleState(200.0, 30.0), DisruptionConfig(v_d=28.0))

    def test_every_terminal_passes_membership(self):
        s = scenario_with(
            (VehicleState(20.0, 27.0), VehicleState(-15.0, 27.0)),
        )
        dcfg = DisruptionConfig(v_d=27.0)
        plan = solve_problem1(s, 2.0, VehicleState(48.0, 25.0), dcfg)
        params = ReachabilityParams.from_limits(LIMITS)
        for i, final in enumerate(plan.cooperator_terminals, start=1):
            assert contains(final.position, final.speed, plan.t_f, s.cooperator(i),
                            params, LIMITS, tol=1e-6)


class TestUnified:
    def test_earliest_grid_time_when_everything_is_free(self):
        # v_d equals the ego's speed and the road is empty: the optimum sits
        # at the first grid time with objective gamma_t * t_lb.
        s = scenario_with((), u=VehicleState(500.0, 20.0))
        dcfg = DisruptionConfig(v_d=23.0)
        cfg = SolverConfig(grid_points=20, refine_iters=8)
        plan = solve_unified_p2(s, dcfg, cfg)
        assert plan.t_f == pytest.approx(cfg.t_lb)
        assert plan.objective == pytest.approx(dcfg.gamma_t * cfg.t_lb, abs=1e-6)
        assert plan.unified

    def test_single_outer_pass_and_candidates_are_ranked(self):
        s = scenario_with((VehicleState(25.0, 27.0),))
        dcfg = DisruptionConfig(v_d=27.0)
        plans = unified_plan_candidates(s, dcfg, FAST_CFG, limit=5)
        objectives = [p.objective for p in plans]
        assert objectives == sorted(objectives)
        assert plans[0].objective == solve_unified_p2(s, dcfg, FAST_CFG).objective

    def test_matches_brute_force_grid(self):
        s = scenario_with(
            (VehicleState(22.0, 27.5),),
            u=VehicleState(48.0, 20.0),
        )
        dcfg = DisruptionConfig(v_d=27.5)
        cfg = SolverConfig(t_max=8.0, grid_points=16, refine_iters=16)
        plan = solve_unified_p2(s, dcfg, cfg)
        brute = brute_force_unified(
            s, dcfg, t_lb=cfg.t_lb, t_max=cfg.t_max, dt_grid=0.25, dx=0.1, dv=0.05,
            reach_margin=cfg.reach_margin, gap_margin=cfg.gap_margin,
        )
        assert abs(plan.objective - brute) <= 0.05 * max(brute, plan.objective)

    def test_ego_slow_vehicle_gap_holds_at_terminal(self):
        s = scenario_with((VehicleState(25.0, 27.0),))
        dcfg = DisruptionConfig(v_d=27.0)
        plan = solve_unified_p2(s, dcfg, FAST_CFG)
        u_final = s.uncontrolled.position + s.uncontrolled.speed * plan.t_f
        gap = u_final - plan.ego_terminal.position
        assert gap >= SAFETY.min_gap(plan.ego_terminal.speed) - 1e-6

    def test_longer_cap_never_hurts_on_nested_grids(self):
        s = scenario_with((VehicleState(25.0, 27.0),))
        dcfg = DisruptionConfig(v_d=27.0)
        # identical spacing (0.5 s), one grid a prefix of the other
        cfg_short = SolverConfig(t_max=10.0, grid_points=20, refine_iters=0)
        cfg_long = SolverConfig(t_max=20.0, grid_points=40, refine_iters=0)
        short = solve_unified_p2(s, dcfg, cfg_short)
        long = solve_unified_p2(s, dcfg, cfg_long)
        assert long.objective <= short.objective + 1e-9

    def test_deterministic(self):
        s = scenario_with((VehicleState(25.0, 27.0), VehicleState(-12.0, 26.0)))
        dcfg = DisruptionConfig(v_d=27.0)
        a = solve_unified_p2(s, dcfg, FAST_CFG)
        b = solve_unified_p2(s, dcfg, FAST_CFG)
        assert a.t_f == b.t_f
        assert a.objective == b.objective
        assert a.cooperator_terminals == b.cooperator_terminals

    def test_infeasible_range_raises(self):
        # Cooperators locked bumper to bumper and the horizon capped so low
        # that no slot can open the ego's gap.
        s = scenario_with(
            (VehicleState(16.0, 25.0), VehicleState(0.5, 25.0)),
            u=VehicleState(45.0, 20.0),
        )
        cfg = SolverConfig(t_lb=0.5, t_max=0.6, grid_points=3, refine_iters=0)
        with pytest.raises(CoordinationInfeasible):
            solve_unified_p2(s, DisruptionConfig(v_d=25.0), cfg)


class TestVerification:
    def test_corrupted_plan_is_caught(self):
        s = scenario_with((VehicleState(25.0, 27.0),))
        dcfg = DisruptionConfig(v_d=27.0)
        plan = solve_unified_p2(s, dcfg, FAST_CFG)
        bad = dataclasses.replace(
            plan,
            cooperator_terminals=(VehicleState(plan.ego_terminal.position, 27.0),),
        )
        problems = plan_violations(bad, s)
        assert problems
        with pytest.raises(PlanVerificationError):
            verify_plan(bad, s)
