import numpy as np
import pytest

from lanecoop.model import ActuationLimits, SafetyParams, Scenario, VehicleState


@pytest.fixture
def limits():
    return ActuationLimits(u_min=-7.0, u_max=3.3, v_min=5.0, v_max=35.0)


@pytest.fixture
def safety():
    return SafetyParams(epsilon=10.0, phi=0.2)


@pytest.fixture
def base_scenario(limits, safety):
    """Ego behind the slow vehicle with a comfortable gap, three cooperators."""
    return Scenario(
        ego=VehicleState(0.0, 23.0),
        uncontrolled=VehicleState(50.0, 20.0),
        cooperators=(
            VehicleState(30.0, 30.0),
            VehicleState(-10.0, 29.5),
            VehicleState(-50.0, 29.0),
        ),
        limits=limits,
        safety=safety,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
