"""Traffic disruption metric: per-vehicle position/flow terms and aggregates.

A vehicle's disruption at time t compares its terminal state against the
position it would have reached by cruising at its initial speed and against
the desired flow speed. Both squared deviations are non-dimensionalized so
they can be summed and thresholded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .model import ActuationLimits, VehicleState

DEFAULT_GAMMA = 0.5
DEFAULT_T_AVG = 2.0
DEFAULT_GAMMA_T = 1.0 / 20.0


@dataclass(frozen=True)
class DisruptionWeights:
    """Non-dimensionalizing weights for one vehicle.

    ``gamma_x`` scales squared position deviation (1/m^2), ``gamma_v`` scales
    squared speed deviation (s^2/m^2), ``gamma_t`` scales the terminal time
    when it enters an objective (1/s).
    """

    gamma: float
    t_avg: float
    v_d: float
    gamma_t: float
    gamma_x: float
    gamma_v: float


def compute_weights(
    gamma: float,
    t_avg: float,
    v_d: float,
    v0: float,
    limits: ActuationLimits,
    gamma_t: float = DEFAULT_GAMMA_T,
) -> DisruptionWeights:
    """Derive weights from the tuning parameter and worst-case deviation scales.

    The position scale is the largest speed deviation from ``v0`` reachable
    within the speed box, sustained for ``t_avg``; the flow scale is the
    largest deviation of the box from ``v_d``. Weighted terms are
    dimensionless, so division by the squared scales is used throughout.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    if not t_avg > 0.0:
        raise ValueError(f"t_avg must be positive, got {t_avg}")
    dev_x = max(abs(limits.v_max - v0), abs(limits.v_min - v0))
    dev_v = max(abs(limits.v_max - v_d), abs(limits.v_min - v_d))
    if dev_x == 0.0:
        raise ValueError("position scale is zero: v0 equals both speed bounds")
    if gamma < 1.0 and dev_v == 0.0:
        raise ValueError("flow scale is zero: v_d equals both speed bounds")
    gamma_x = gamma / (dev_x * t_avg) ** 2
    gamma_v = 0.0 if gamma == 1.0 else (1.0 - gamma) / dev_v**2
    return DisruptionWeights(
        gamma=gamma, t_avg=t_avg, v_d=v_d, gamma_t=gamma_t, gamma_x=gamma_x, gamma_v=gamma_v
    )


def position_deviation(initial: VehicleState, final: VehicleState, t: float) -> float:
    """Signed offset of the final position from constant-speed extrapolation (m)."""
    return final.position - (initial.position + initial.speed * t)


def total_disruption(
    initial: VehicleState, final: VehicleState, t: float, w: DisruptionWeights
) -> float:
    """Weighted sum of squared position and flow deviations (dimensionless)."""
    if t < 0.0:
        raise ValueError(f"time must be non-negative, got {t}")
    dx = position_deviation(initial, final, t)
    dv = final.speed - w.v_d
    return w.gamma_x * dx * dx + w.gamma_v * dv * dv


@dataclass(frozen=True)
class PerVehicleDisruption:
    """Raw squared deviations plus the weighted total for one vehicle."""

    position: float  # m^2
    flow: float  # m^2/s^2
    total: float  # dimensionless


@dataclass(frozen=True)
class DisruptionReport:
    per_vehicle: tuple[PerVehicleDisruption, ...]
    global_total: float
    pair: float


def vehicle_entry(
    initial: VehicleState, final: VehicleState, t: float, w: DisruptionWeights
) -> PerVehicleDisruption:
    dx = position_deviation(initial, final, t)
    dv = final.speed - w.v_d
    return PerVehicleDisruption(
        position=dx * dx, flow=dv * dv, total=w.gamma_x * dx * dx + w.gamma_v * dv * dv
    )


def aggregate(entries: Sequence[PerVehicleDisruption], slot: int) -> DisruptionReport:
    """Sum entries into the global total and the merge-slot pair total.

    Slot k places the ego between cooperators k and k+1 (1-indexed). The pair
    metric sums the totals of the cooperators immediately ahead of and behind
    the slot, one-sided when the ego merges ahead of all or behind all.
    """
    m = len(entries)
    if not 0 <= slot <= m:
        raise ValueError(f"slot {slot} out of range 0..{m}")
    pair = 0.0
    if slot >= 1:
        pair += entries[slot - 1].total
    if slot < m:
        pair += entries[slot].total
    return DisruptionReport(
        per_vehicle=tuple(entries),
        global_total=sum(e.total for e in entries),
        pair=pair,
    )


def report_from_states(
    initials: Sequence[VehicleState],
    finals: Sequence[VehicleState],
    t: float,
    weights: Sequence[DisruptionWeights],
    slot: int,
) -> DisruptionReport:
    if not len(initials) == len(finals) == len(weights):
        raise ValueError("inconsistent vehicle count")
    entries = [vehicle_entry(i, f, t, w) for i, f, w in zip(initials, finals, weights)]
    return aggregate(entries, slot)


@dataclass(frozen=True)
class DisruptionConfig:
    """Shared metric configuration for one scenario run."""

    v_d: float
    gamma: float = DEFAULT_GAMMA
    t_avg: float = DEFAULT_T_AVG
    gamma_t: float = DEFAULT_GAMMA_T

    def for_vehicle(self, v0: float, limits: ActuationLimits) -> DisruptionWeights:
        return compute_weights(self.gamma, self.t_avg, self.v_d, v0, limits, self.gamma_t)
