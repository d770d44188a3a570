"""Exact reachable set of the double integrator under box-bounded acceleration.

At time t > 0 the set of states reachable from an origin state is the lens
between two parabolas in the (position, speed) plane. ``p_upper`` and
``p_lower`` are the implicit boundary functions; a state is reachable iff
``p_upper <= 0`` and ``p_lower >= 0`` and its speed lies in the speed box.
The two constant-extreme-control endpoints are the lens corners, where both
boundary functions vanish.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ActuationLimits, VehicleState

DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class ReachabilityParams:
    """Half-range ``mu`` and midpoint ``nu`` of the acceleration box."""

    mu: float
    nu: float

    def __post_init__(self) -> None:
        if not self.mu > 0.0:
            raise ValueError(f"mu must be positive, got {self.mu}")

    @classmethod
    def from_limits(cls, limits: ActuationLimits) -> "ReachabilityParams":
        return cls(mu=(limits.u_max - limits.u_min) / 2.0, nu=(limits.u_max + limits.u_min) / 2.0)

    @property
    def u_min(self) -> float:
        return self.nu - self.mu

    @property
    def u_max(self) -> float:
        return self.nu + self.mu


def _check_t(t: float) -> None:
    if not t > 0.0:
        raise ValueError(f"boundary curves degenerate at t <= 0, got t={t}")


def p_upper(x, v, t: float, origin: VehicleState, params: ReachabilityParams):
    """Signed value of the first bounding parabola (<= 0 for reachable states)."""
    _check_t(t)
    mu, nu = params.mu, params.nu
    x0, v0 = origin.position, origin.speed
    return (
        -t * t / 2.0
        + 0.25 * ((v - v0 - nu * t) / mu + t) ** 2
        - (x - x0 - t * v0 - nu * t * t / 2.0) / mu
    )


def p_lower(x, v, t: float, origin: VehicleState, params: ReachabilityParams):
    """Signed value of the second bounding parabola (>= 0 for reachable states)."""
    _check_t(t)
    mu, nu = params.mu, params.nu
    x0, v0 = origin.position, origin.speed
    return (
        t * t / 2.0
        - 0.25 * ((-v + v0 + nu * t) / mu + t) ** 2
        - (x - x0 - t * v0 - nu * t * t / 2.0) / mu
    )


def boundary_coefficients(
    origin: VehicleState, params: ReachabilityParams, t: float
) -> tuple[tuple[float, float, float, float], tuple[float, float, float, float]]:
    """Quadratic coefficients of the two reachability inequalities.

    Returns ``(upper, lower)`` where each entry ``(p_vv, r_v, r_x, s)``
    encodes ``g(x, v) = 0.5 p_vv v^2 + r_v v + r_x x + s`` with
    ``g_upper = p_upper`` and ``g_lower = -p_lower``, so both constraints
    read ``g <= 0`` and both are convex in (x, v).
    """
    _check_t(t)
    mu, nu = params.mu, params.nu
    a0 = origin.speed + nu * t
    b0 = origin.position + origin.speed * t + nu * t * t / 2.0
    p_vv = 1.0 / (2.0 * mu * mu)
    upper = (
        p_vv,
        -a0 / (2.0 * mu * mu) + t / (2.0 * mu),
        -1.0 / mu,
        a0 * a0 / (4.0 * mu * mu) - t * a0 / (2.0 * mu) - t * t / 4.0 + b0 / mu,
    )
    lower = (
        p_vv,
        -a0 / (2.0 * mu * mu) - t / (2.0 * mu),
        1.0 / mu,
        a0 * a0 / (4.0 * mu * mu) + t * a0 / (2.0 * mu) - t * t / 4.0 - b0 / mu,
    )
    return upper, lower


def saturation_aux_coefficients(
    origin: VehicleState, params: ReachabilityParams, t: float
) -> tuple[dict, dict]:
    """Displacement bounds under in-path speed saturation, via one auxiliary speed.

    The bounding parabolas assume the speed may leave the box mid-trajectory.
    The true extreme displacement for a terminal speed v is
    ``max_V [V t - (V - v0)^2/(2a) - (V - v)^2/(2d)]`` over admissible peak
    speeds V (and the mirror image with a valley speed W), which is jointly
    convex in (x, v, V) once written as an inequality. Each returned dict
    encodes ``g(x, v, aux) <= 0`` through sparse ``P`` (for 0.5 z'Pz), ``r``
    and ``s`` entries over the slots 'x', 'v', 'aux', plus the box side the
    auxiliary must respect ('aux_max' for V <= v_max, 'aux_min' for
    W >= v_min). Valid for every admissible trajectory; exactly tight at the
    optimal auxiliary value.
    """
    _check_t(t)
    x0, v0 = origin.position, origin.speed
    acc = params.u_max
    dec = -params.u_min
    upper = {
        "P": {("aux", "aux"): 1.0 / acc + 1.0 / dec, ("v", "v"): 1.0 / dec,
              ("aux", "v"): -1.0 / dec},
        "r": {"x": 1.0, "aux": -t - v0 / acc},
        "s": v0 * v0 / (2.0 * acc) - x0,
        "aux_bound": "max",
    }
    lower = {
        "P": {("aux", "aux"): 1.0 / acc + 1.0 / dec, ("v", "v"): 1.0 / acc,
              ("aux", "v"): -1.0 / acc},
        "r": {"x": -1.0, "aux": t - v0 / dec},
        "s": v0 * v0 / (2.0 * dec) + x0,
        "aux_bound": "min",
    }
    return upper, lower


def saturated_position_bounds(
    origin: VehicleState, params: ReachabilityParams, t: float, limits: ActuationLimits, v
):
    """Exact reachable position interval at terminal speed v under the speed box.

    Returns ``(x_min, x_max)``; broadcasts over v. Where no speed limit would
    be crossed these coincide with the bounding parabolas.
    """
    _check_t(t)
    x0, v0 = origin.position, origin.speed
    acc = params.u_max
    dec = -params.u_min
    v = np.asarray(v, dtype=float)
    peak = (t + v0 / acc + v / dec) / (1.0 / acc + 1.0 / dec)
    peak = np.minimum(peak, limits.v_max)
    x_max = x0 + peak * t - (peak - v0) ** 2 / (2.0 * acc) - (peak - v) ** 2 / (2.0 * dec)
    valley = (v0 / dec + v / acc - t) / (1.0 / acc + 1.0 / dec)
    valley = np.maximum(valley, limits.v_min)
    x_min = x0 + valley * t + (v0 - valley) ** 2 / (2.0 * dec) + (v - valley) ** 2 / (2.0 * acc)
    return x_min, x_max


@dataclass(frozen=True)
class ReachSlack:
    p_upper: float
    p_lower: float
    speed_low: float
    speed_high: float


def contains(
    x,
    v,
    t: float,
    origin: VehicleState,
    params: ReachabilityParams,
    limits: ActuationLimits,
    tol: float = DEFAULT_TOL,
):
    """Membership in the reachable set, with tolerance scaled by the curve size."""
    tol_eff = tol * max(1.0, t * t / 2.0)
    up = p_upper(x, v, t, origin, params)
    lo = p_lower(x, v, t, origin, params)
    v_tol = tol * max(1.0, limits.v_max)
    return (
        (up <= tol_eff)
        & (lo >= -tol_eff)
        & (v >= limits.v_min - v_tol)
        & (v <= limits.v_max + v_tol)
    )


def membership_slack(
    x: float,
    v: float,
    t: float,
    origin: VehicleState,
    params: ReachabilityParams,
    limits: ActuationLimits,
) -> ReachSlack:
    return ReachSlack(
        p_upper=float(p_upper(x, v, t, origin, params)),
        p_lower=float(p_lower(x, v, t, origin, params)),
        speed_low=float(v - limits.v_min),
        speed_high=float(limits.v_max - v),
    )


def extreme_endpoints(
    origin: VehicleState, params: ReachabilityParams, t: float
) -> tuple[VehicleState, VehicleState]:
    """Endpoints of the constant-min and constant-max control trajectories."""
    _check_t(t)
    x0, v0 = origin.position, origin.speed
    lo = VehicleState(
        position=x0 + v0 * t + params.u_min * t * t / 2.0, speed=v0 + params.u_min * t
    )
    hi = VehicleState(
        position=x0 + v0 * t + params.u_max * t * t / 2.0, speed=v0 + params.u_max * t
    )
    return lo, hi


def reachable_speed_range(
    origin: VehicleState, params: ReachabilityParams, t: float, limits: ActuationLimits
) -> tuple[float, float]:
    lo, hi = extreme_endpoints(origin, params, t)
    return max(lo.speed, limits.v_min), min(hi.speed, limits.v_max)


def sample_boundary_and_interior(
    origin: VehicleState,
    params: ReachabilityParams,
    t: float,
    n: int,
    limits: ActuationLimits,
    rng: np.random.Generator | None = None,
    segments: int = 8,
) -> np.ndarray:
    """Endpoints of n random admissible piecewise-constant controls plus both extremes.

    Controls are clipped per segment so the speed stays inside the box, which
    keeps every sampled signal admissible; all returned (x, v) endpoints are
    therefore genuinely reachable. Returns an (n + 2, 2) array.
    """
    _check_t(t)
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    rng = rng or np.random.default_rng(0)
    h = t / segments
    x = np.full(n, origin.position)
    v = np.full(n, origin.speed)
    for _ in range(segments):
        u = rng.uniform(params.u_min, params.u_max, size=n)
        u_lo = np.maximum(params.u_min, (limits.v_min - v) / h)
        u_hi = np.minimum(params.u_max, (limits.v_max - v) / h)
        u = np.clip(u, u_lo, u_hi)
        x = x + v * h + 0.5 * u * h * h
        v = v + u * h
    lo, hi = extreme_endpoints(origin, params, t)
    pts = np.empty((n + 2, 2))
    pts[:n, 0], pts[:n, 1] = x, v
    pts[n] = (lo.position, lo.speed)
    pts[n + 1] = (hi.position, hi.speed)
    return pts
