import math

import pytest
from hypothesis import given, strategies as st

from lanecoop.model import (
    ActuationLimits,
    SafetyParams,
    Scenario,
    VehicleState,
    predict_uncontrolled,
    scenario_violations,
    validate_scenario,
)


def make_scenario(u_position, cooperators=(), **kwargs):
    return Scenario(
        ego=VehicleState(0.0, 23.0),
        uncontrolled=VehicleState(u_position, 20.0),
        cooperators=cooperators,
        **kwargs,
    )


class TestValidation:
    def test_gap_exactly_at_minimum_is_valid(self):
        # gap 14.6 m versus required 0.2 * 23 + 10 = 14.6 m
        s = make_scenario(14.6)
        assert validate_scenario(s) is s

    def test_gap_below_minimum_is_a_violation(self):
        result = validate_scenario(make_scenario(14.5))
        assert isinstance(result, list)
        assert len(result) == 1
        assert result[0].code == "rear-end-gap"
        assert result[0].vehicles == ("U", "ego")

    def test_empty_cooperator_set_is_well_formed(self):
        s = make_scenario(20.0, cooperators=())
        assert validate_scenario(s) is s
        assert s.m == 0

    def test_speed_above_limit_names_the_vehicle(self):
        s = make_scenario(40.0, cooperators=(VehicleState(100.0, 40.0),))
        result = validate_scenario(s)
        assert isinstance(result, list)
        assert any(v.code == "speed-bounds" and "coop1" in v.vehicles for v in result)

    def test_fast_lane_ordering_checked_pairwise(self):
        s = make_scenario(
            40.0,
            cooperators=(VehicleState(0.0, 30.0), VehicleState(-5.0, 30.0)),
        )
        result = validate_scenario(s)
        assert isinstance(result, list)
        assert any(v.vehicles == ("coop1", "coop2") for v in result)

    def test_front_and_back_join_the_fast_lane_chain(self):
        s = make_scenario(
            40.0,
            cooperators=(VehicleState(0.0, 30.0),),
            front=VehicleState(10.0, 30.0),
            back=VehicleState(-100.0, 30.0),
        )
        result = validate_scenario(s)
        assert isinstance(result, list)
        assert any(v.vehicles == ("F", "coop1") for v in result)

    def test_validation_is_idempotent(self):
        s = make_scenario(30.0, cooperators=(VehicleState(80.0, 28.0),))
        first = validate_scenario(s)
        assert first is s
        assert validate_scenario(first) is s


class TestTypeInvariants:
    def test_actuation_limits_sign_conventions(self):
        with pytest.raises(ValueError):
            ActuationLimits(u_min=1.0, u_max=3.0, v_min=0.0, v_max=30.0)
        with pytest.raises(ValueError):
            ActuationLimits(u_min=-3.0, u_max=3.0, v_min=30.0, v_max=20.0)
        with pytest.raises(ValueError):
            ActuationLimits(u_min=-3.0, u_max=3.0, v_min=-1.0, v_max=20.0)

    def test_safety_params_positive(self):
        with pytest.raises(ValueError):
            SafetyParams(epsilon=0.0, phi=0.2)
        with pytest.raises(ValueError):
            SafetyParams(epsilon=10.0, phi=0.0)

    def test_cooperator_indexing_is_one_based(self, base_scenario):
        assert base_scenario.cooperator(1) == base_scenario.cooperators[0]
        with pytest.raises(IndexError):
            base_scenario.cooperator(0)
        with pytest.raises(IndexError):
            base_scenario.cooperator(4)


class TestPrediction:
    def test_constant_speed_extrapolation(self):
        out = predict_uncontrolled(VehicleState(14.6, 20.0), 2.0)
        assert out == VehicleState(54.6, 20.0)

    def test_zero_time_is_identity(self):
        state = VehicleState(12.3, 21.7)
        assert predict_uncontrolled(state, 0.0) == state

    def test_full_horizon(self):
        out = predict_uncontrolled(VehicleState(0.0, 20.0), 20.0)
        assert out == VehicleState(400.0, 20.0)

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            predict_uncontrolled(VehicleState(0.0, 20.0), -0.1)

    @given(
        x=st.floats(-1e4, 1e4),
        v=st.floats(0.0, 40.0),
        a=st.floats(0.0, 10.0),
        b=st.floats(0.0, 10.0),
    )
    def test_additive_in_time(self, x, v, a, b):
        state = VehicleState(x, v)
        stepped = predict_uncontrolled(predict_uncontrolled(state, a), b)
        direct = predict_uncontrolled(state, a + b)
        assert stepped.speed == direct.speed
        assert math.isclose(stepped.position, direct.position, rel_tol=1e-12, abs_tol=1e-9)


def test_violations_empty_for_valid(base_scenario):
    assert scenario_violations(base_scenario) == []
