import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lanecoop.model import ActuationLimits, VehicleState
from lanecoop.reachability import (
    ReachabilityParams,
    boundary_coefficients,
    contains,
    extreme_endpoints,
    membership_slack,
    p_lower,
    p_upper,
    sample_boundary_and_interior,
    saturated_position_bounds,
)
from oracles import extreme_displacement

LIMITS = ActuationLimits(u_min=-7.0, u_max=3.3, v_min=5.0, v_max=35.0)
PARAMS = ReachabilityParams.from_limits(LIMITS)
ORIGIN = VehicleState(0.0, 20.0)


class TestParams:
    def test_half_range_and_midpoint(self):
        assert PARAMS.mu == pytest.approx(5.15)
        assert PARAMS.nu == pytest.approx(-1.85)
        assert PARAMS.u_min == pytest.approx(-7.0)
        assert PARAMS.u_max == pytest.approx(3.3)

    def test_degenerate_box_rejected(self):
        with pytest.raises(ValueError):
            ReachabilityParams(mu=0.0, nu=1.0)


class TestBoundaryValues:
    def test_constant_max_control_endpoint_lies_on_both_curves(self):
        # (46.6, 26.6) after 2 s of full acceleration from (0, 20); the
        # extreme endpoints are the lens corners, where both curves meet.
        assert p_upper(46.6, 26.6, 2.0, ORIGIN, PARAMS) == pytest.approx(0.0, abs=1e-9)
        assert p_lower(46.6, 26.6, 2.0, ORIGIN, PARAMS) == pytest.approx(0.0, abs=1e-9)

    def test_constant_min_control_endpoint_lies_on_both_curves(self):
        assert p_lower(26.0, 6.0, 2.0, ORIGIN, PARAMS) == pytest.approx(0.0, abs=1e-9)
        assert p_upper(26.0, 6.0, 2.0, ORIGIN, PARAMS) == pytest.approx(0.0, abs=1e-9)

    def test_coasting_endpoint_is_strictly_interior(self):
        assert p_upper(40.0, 20.0, 2.0, ORIGIN, PARAMS) == pytest.approx(
            -0.8709586200395888, rel=1e-9
        )
        assert p_lower(40.0, 20.0, 2.0, ORIGIN, PARAMS) == pytest.approx(
            0.8709586200395888, rel=1e-9
        )

    def test_point_beyond_max_control_reach_excluded(self):
        # Same terminal speed as full acceleration but 100 m downstream:
        # violates the forward bound, so p_lower goes negative.
        assert p_lower(100.0, 26.6, 2.0, ORIGIN, PARAMS) < 0.0
        assert not contains(100.0, 26.6, 2.0, ORIGIN, PARAMS, LIMITS)

    def test_point_too_far_back_excluded(self):
        # Coasting speed but only 10 m traveled: violates the rear bound,
        # so p_upper goes positive.
        assert p_upper(10.0, 20.0, 2.0, ORIGIN, PARAMS) > 0.0
        assert not contains(10.0, 20.0, 2.0, ORIGIN, PARAMS, LIMITS)

    def test_degenerate_time_rejected(self):
        for fn in (p_upper, p_lower):
            with pytest.raises(ValueError):
                fn(0.0, 20.0, 0.0, ORIGIN, PARAMS)


class TestContains:
    def test_interior_and_boundary_membership(self):
        assert contains(40.0, 20.0, 2.0, ORIGIN, PARAMS, LIMITS)
        assert contains(46.6, 26.6, 2.0, ORIGIN, PARAMS, LIMITS)

    def test_speed_box_is_enforced(self):
        fast = VehicleState(0.0, 34.0)
        # 34 + 3.3*2 = 40.6 exceeds v_max; the parabolas alone would admit it.
        x_end = 34.0 * 2 + 0.5 * 3.3 * 4
        assert not contains(x_end, 40.0, 2.0, fast, PARAMS, LIMITS)

    def test_slack_report(self):
        slack = membership_slack(40.0, 20.0, 2.0, ORIGIN, PARAMS, LIMITS)
        assert slack.p_upper < 0.0 < slack.p_lower
        assert slack.speed_low == pytest.approx(15.0)
        assert slack.speed_high == pytest.approx(15.0)


class TestSampling:
    def test_every_sampled_endpoint_is_contained(self, rng):
        pts = sample_boundary_and_interior(ORIGIN, PARAMS, 2.0, 2000, LIMITS, rng=rng)
        ok = contains(pts[:, 0], pts[:, 1], 2.0, ORIGIN, PARAMS, LIMITS, tol=1e-6)
        assert bool(np.all(ok))

    def test_extremes_sit_on_the_boundary(self):
        lo, hi = extreme_endpoints(ORIGIN, PARAMS, 2.0)
        assert abs(p_lower(lo.position, lo.speed, 2.0, ORIGIN, PARAMS)) <= 1e-9
        assert abs(p_upper(hi.position, hi.speed, 2.0, ORIGIN, PARAMS)) <= 1e-9

    def test_short_horizon_endpoints_stay_near_extrapolation(self, rng):
        t = 0.01
        pts = sample_boundary_and_interior(ORIGIN, PARAMS, t, 200, LIMITS, rng=rng)
        coast = ORIGIN.position + ORIGIN.speed * t
        bound = 0.5 * max(abs(LIMITS.u_min), LIMITS.u_max) * t * t
        assert np.max(np.abs(pts[:, 0] - coast)) <= bound + 1e-12

    def test_coasting_continuation_stays_reachable(self, rng):
        pts = sample_boundary_and_interior(ORIGIN, PARAMS, 2.0, 500, LIMITS, rng=rng)
        delta = 0.5
        shifted_ok = contains(
            pts[:, 0] + pts[:, 1] * delta, pts[:, 1], 2.0 + delta, ORIGIN, PARAMS, LIMITS,
            tol=1e-6,
        )
        assert bool(np.all(shifted_ok))

    def test_symmetric_bounds_give_a_symmetric_set(self, rng):
        limits = ActuationLimits(u_min=-3.0, u_max=3.0, v_min=0.0, v_max=60.0)
        params = ReachabilityParams.from_limits(limits)
        origin = VehicleState(0.0, 25.0)
        t = 2.0
        pts = sample_boundary_and_interior(origin, params, t, 400, limits, rng=rng)
        xi = pts[:, 0] - origin.position - origin.speed * t
        omega = pts[:, 1] - origin.speed
        mirrored = contains(
            origin.position + origin.speed * t - xi, origin.speed - omega, t,
            origin, params, limits, tol=1e-6,
        )
        assert bool(np.all(mirrored))

    def test_sample_count_validated(self):
        with pytest.raises(ValueError):
            sample_boundary_and_interior(ORIGIN, PARAMS, 2.0, 0, LIMITS)


@settings(max_examples=60, deadline=None)
@given(
    v0=st.floats(6.0, 34.0),
    t=st.floats(0.3, 6.0),
    x=st.floats(-50.0, 250.0),
    v=st.floats(5.0, 35.0),
)
def test_boundary_coefficients_match_direct_evaluation(v0, t, x, v):
    origin = VehicleState(3.0, v0)
    upper, lower = boundary_coefficients(origin, PARAMS, t)

    def quad(coeffs):
        p_vv, r_v, r_x, s = coeffs
        return 0.5 * p_vv * v * v + r_v * v + r_x * x + s

    assert quad(upper) == pytest.approx(p_upper(x, v, t, origin, PARAMS), rel=1e-9, abs=1e-9)
    assert quad(lower) == pytest.approx(-p_lower(x, v, t, origin, PARAMS), rel=1e-9, abs=1e-9)


@pytest.mark.parametrize(
    "v0,t,v_term",
    [(33.2, 1.3, 34.7), (30.0, 3.0, 30.0), (34.0, 4.0, 20.0), (12.0, 2.5, 8.0)],
)
def test_saturated_bounds_match_profile_integration(v0, t, v_term):
    origin = VehicleState(0.0, v0)
    x_min, x_max = saturated_position_bounds(origin, PARAMS, t, LIMITS, v_term)
    sim_max = extreme_displacement(v0, t, v_term, LIMITS, maximize=True)
    sim_min = extreme_displacement(v0, t, v_term, LIMITS, maximize=False)
    assert float(x_max) == pytest.approx(sim_max, abs=5e-3)
    assert float(x_min) == pytest.approx(sim_min, abs=5e-3)
