"""Waypoint guidance: line of sight, cross-track correction and reactive avoidance.

The desired heading is the wrapped sum of three terms

    psi_d = psi_LOS + psi_CTE + psi_COLAV

where the avoidance term is only non-zero while the decision layer asks
for a turn.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

from .angles import wrap_to_pi
from .risk import ZmfKnees, zmf


class WaypointReached(ValueError):
    """The vessel sits exactly on the waypoint, so no bearing exists."""


@dataclass(frozen=True)
class Waypoint:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"waypoint coordinates must be finite: ({self.x}, {self.y})")


@dataclass(frozen=True)
class Route:
    """Ordered waypoints; ``active_index`` points at the waypoint being steered to."""

    waypoints: tuple[Waypoint, ...]
    active_index: int = 1

    def __post_init__(self):
        object.__setattr__(self, "waypoints", tuple(self.waypoints))
        if len(self.waypoints) < 2:
            raise ValueError("a route needs at least two waypoints")
        if not 1 <= self.active_index < len(self.waypoints):
            raise ValueError(f"active_index {self.active_index} out of range")
        for prev, nxt in zip(self.waypoints, self.waypoints[1:]):
            if prev == nxt:
                raise ValueError(f"consecutive waypoints coincide at ({prev.x}, {prev.y})")

    @classmethod
    def from_points(cls, points: Sequence[Sequence[float]]) -> "Route":
        return cls(tuple(Waypoint(float(x), float(y)) for x, y in points))

    @property
    def active(self) -> Waypoint:
        return self.waypoints[self.active_index]

    @property
    def previous(self) -> Waypoint:
        return self.waypoints[self.active_index - 1]

    @property
    def leg_heading(self) -> float:
        a, b = self.previous, self.active
        return math.atan2(b.y - a.y, b.x - a.x)


@dataclass(frozen=True)
class PathFrame:
    leg_length: float
    leg_heading: float
    along_track: float
    wp_angle: float
    cross_track: float


@dataclass(frozen=True)
class GuidanceParams:
    """``mu`` damps the cross-track correction; ``range_knees`` shape the
    avoidance range weight (full effect inside ``a``, none beyond ``b``)."""

    mu: float = 200.0
    k_colav: float = 0.9
    range_knees: ZmfKnees = field(default_factory=lambda: ZmfKnees(400.0, 1200.0))
    acceptance_radius: float = 100.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be > 0")
        if not self.acceptance_radius > 0:
            raise ValueError("acceptance_radius must be > 0")
        if not math.isfinite(self.k_colav):
            raise ValueError("k_colav must be finite")


def los_heading(vessel_pos: tuple[float, float], wp: Waypoint) -> float:
    ex = wp.x - vessel_pos[0]
    ey = wp.y - vessel_pos[1]
    if ex == 0.0 and ey == 0.0:
        raise WaypointReached(f"vessel is on waypoint ({wp.x}, {wp.y})")
    return wrap_to_pi(math.atan2(ey, ex))


def path_frame(vessel_pos: tuple[float, float], wp_prev: Waypoint, wp: Waypoint) -> PathFrame:
    """Along-track and cross-track errors relative to the leg ``wp_prev -> wp``.

    ``cross_track`` is positive when the vessel is to starboard of the leg.
    """
    lx = wp.x - wp_prev.x
    ly = wp.y - wp_prev.y
    leg_length = math.hypot(lx, ly)
    if leg_length == 0.0:
        raise ValueError("degenerate leg: waypoints coincide")
    leg_heading = math.atan2(ly, lx)

    ex = wp.x - vessel_pos[0]
    ey = wp.y - vessel_pos[1]
    along = (ex * lx + ey * ly) / leg_length
    if ex == 0.0 and ey == 0.0:
        return PathFrame(leg_length, leg_heading, 0.0, 0.0, 0.0)
    wp_angle = wrap_to_pi(leg_heading - math.atan2(ey, ex))
    # along * tan(wp_angle) equals the signed perpendicular offset; the
    # cross product form stays finite when the vessel is abeam of the waypoint.
    cross = (ly * ex - lx * ey) / leg_length
    return PathFrame(leg_length, leg_heading, along, wp_angle, cross)


def cte_correction(frame: PathFrame, mu: float) -> float:
    if not mu > 0:
        raise ValueError("mu must be > 0")
    return -math.atan(frame.cross_track / mu)


def colav_offset(range_: float, bearing: float, turn_sign: int, params: GuidanceParams) -> float:
    """Reactive avoidance heading offset in radians (positive = starboard)."""
    if turn_sign == 0:
        return 0.0
    w_range = zmf(range_, params.range_knees)
    w_bearing = max(0.0, math.cos(bearing))
    return turn_sign * params.k_colav * w_range * w_bearing


def desired_heading(los: float, cte: float, colav: float) -> float:
    return wrap_to_pi(los + cte + colav)


def advance_waypoint(route: Route, vessel_pos: tuple[float, float], acceptance_radius: float) -> Route:
    if route.active_index >= len(route.waypoints) - 1:
        return route
    wp = route.active
    if math.hypot(wp.x - vessel_pos[0], wp.y - vessel_pos[1]) < acceptance_radius:
        return replace(route, active_index=route.active_index + 1)
    return route
