"""Vehicles, actuation limits, safety geometry, and scenario validation.

All quantities are SI: positions in m, speeds in m/s, accelerations in m/s^2.
Positions are absolute longitudinal coordinates on a straight road; lane
membership is a role label, not a coordinate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional


@dataclass(frozen=True)
class VehicleState:
    """Longitudinal position (m) and speed (m/s) of one vehicle at an instant."""

    position: float
    speed: float


@dataclass(frozen=True)
class ActuationLimits:
    """Box bounds on acceleration and speed shared by all controlled vehicles."""

    u_min: float
    u_max: float
    v_min: float
    v_max: float

    def __post_init__(self) -> None:
        if not self.u_min < 0.0 < self.u_max:
            raise ValueError(f"need u_min < 0 < u_max, got [{self.u_min}, {self.u_max}]")
        if not 0.0 <= self.v_min < self.v_max:
            raise ValueError(f"need 0 <= v_min < v_max, got [{self.v_min}, {self.v_max}]")


@dataclass(frozen=True)
class SafetyParams:
    """Speed-dependent rear-end gap: leader_x - follower_x >= epsilon + phi * follower_v."""

    epsilon: float  # standstill distance, m
    phi: float  # reaction time, s

    def __post_init__(self) -> None:
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not self.phi > 0.0:
            raise ValueError(f"phi must be positive, got {self.phi}")

    def min_gap(self, follower_speed: float) -> float:
        return self.epsilon + self.phi * follower_speed


DEFAULT_LIMITS = ActuationLimits(u_min=-7.0, u_max=3.3, v_min=5.0, v_max=35.0)
DEFAULT_SAFETY = SafetyParams(epsilon=10.0, phi=0.2)


@dataclass(frozen=True)
class Violation:
    """One violated scenario invariant. Violations are data, not faults."""

    code: str
    message: str
    vehicles: tuple[str, ...] = ()

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}"


@dataclass(frozen=True)
class Scenario:
    """An ego vehicle behind a slow uncontrolled leader, plus the fast-lane occupants.

    ``cooperators`` are ordered front to back: index 0 is the cooperator
    farthest ahead, the last entry is the rearmost. ``front``/``back`` are
    optional uncontrolled fast-lane vehicles bounding the cooperative set.
    """

    ego: VehicleState
    uncontrolled: VehicleState
    cooperators: tuple[VehicleState, ...] = ()
    front: Optional[VehicleState] = None
    back: Optional[VehicleState] = None
    limits: ActuationLimits = DEFAULT_LIMITS
    safety: SafetyParams = DEFAULT_SAFETY

    def __post_init__(self) -> None:
        object.__setattr__(self, "cooperators", tuple(self.cooperators))

    @property
    def m(self) -> int:
        return len(self.cooperators)

    def cooperator(self, index: int) -> VehicleState:
        """1-indexed access matching the front-to-back numbering."""
        if not 1 <= index <= self.m:
            raise IndexError(f"cooperator index {index} out of range 1..{self.m}")
        return self.cooperators[index - 1]

    def fast_lane(self) -> list[tuple[str, VehicleState]]:
        """Fast-lane occupants front to back as (label, state) pairs."""
        lane: list[tuple[str, VehicleState]] = []
        if self.front is not None:
            lane.append(("F", self.front))
        lane.extend((f"coop{i}", c) for i, c in enumerate(self.cooperators, start=1))
        if self.back is not None:
            lane.append(("B", self.back))
        return lane

    def labelled_vehicles(self) -> list[tuple[str, VehicleState]]:
        out = [("ego", self.ego), ("U", self.uncontrolled)]
        out.extend(self.fast_lane())
        return out


def predict_uncontrolled(v0: VehicleState, t: float) -> VehicleState:
    """Constant-speed extrapolation of an uncontrolled vehicle."""
    if t < 0.0:
        raise ValueError(f"prediction time must be non-negative, got {t}")
    return VehicleState(position=v0.position + v0.speed * t, speed=v0.speed)


def scenario_violations(s: Scenario) -> list[Violation]:
    """All violated scenario invariants at time 0 (empty list when valid)."""
    out: list[Violation] = []
    lim = s.limits

    for label, veh in s.labelled_vehicles():
        if not (math.isfinite(veh.position) and math.isfinite(veh.speed)):
            out.append(Violation("nonfinite", f"{label} has non-finite state", (label,)))
            continue
        if not lim.v_min <= veh.speed <= lim.v_max:
            out.append(
                Violation(
                    "speed-bounds",
                    f"{label} speed {veh.speed} outside [{lim.v_min}, {lim.v_max}]",
                    (label,),
                )
            )

    def check_gap(lead_label: str, lead: VehicleState, follow_label: str, follow: VehicleState) -> None:
        gap = lead.position - follow.position
        need = s.safety.min_gap(follow.speed)
        if gap < need - 1e-9:  # absolute slack so exact-boundary gaps validate
            out.append(
                Violation(
                    "rear-end-gap",
                    f"gap {lead_label}->{follow_label} is {gap:.6g} m, needs >= {need:.6g} m",
                    (lead_label, follow_label),
                )
            )

    check_gap("U", s.uncontrolled, "ego", s.ego)
    lane = s.fast_lane()
    for (lead_label, lead), (follow_label, follow) in zip(lane, lane[1:]):
        check_gap(lead_label, lead, follow_label, follow)
    return out


def validate_scenario(s: Scenario) -> Scenario | list[Violation]:
    """Return the scenario unchanged when valid, else the list of violations."""
    violations = scenario_violations(s)
    return s if not violations else violations
