"""Inertial and path (route-segment) frames.

Conventions: the inertial frame is right-handed with course angles measured
counter-clockwise from the X axis. A path frame has its x axis along the
active route segment and y to the left of the direction of travel, so
positive cross-track values are on the PORT side and negative values on the
starboard side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    w = math.atan2(math.sin(a), math.cos(a))
    return math.pi if w <= -math.pi else w


def wrap_angles(a: np.ndarray) -> np.ndarray:
    w = np.arctan2(np.sin(a), np.cos(a))
    return np.where(w <= -np.pi, np.pi, w)


@dataclass(frozen=True)
class InertialState:
    x_n: float
    y_n: float
    chi_n: float

    def __post_init__(self):
        object.__setattr__(self, "chi_n", wrap_angle(float(self.chi_n)))

    def as_array(self) -> np.ndarray:
        return np.array([self.x_n, self.y_n, self.chi_n])


@dataclass(frozen=True)
class PathState:
    x: float
    y: float
    chi: float

    def __post_init__(self):
        object.__setattr__(self, "chi", wrap_angle(float(self.chi)))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.chi])


@dataclass(frozen=True)
class WaypointSegment:
    """A straight route segment starting at ``origin`` with lane bounds
    expressed as cross-track offsets in the segment's own frame."""

    origin: InertialState
    length: float
    lane_min: float = -100.0
    lane_max: float = 100.0

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError(f"segment length must be positive, got {self.length}")
        if not self.lane_min < self.lane_max:
            raise ValueError(f"lane_min ({self.lane_min}) must be below lane_max ({self.lane_max})")

    @property
    def course(self) -> float:
        return self.origin.chi_n


@dataclass(frozen=True)
class Route:
    """Ordered waypoints. Each waypoint's ``chi_n`` is the course of the
    segment leaving it; the last waypoint repeats the final course."""

    waypoints: tuple[InertialState, ...]
    acceptance_radius: float = 50.0
    lanes: tuple[tuple[float, float], ...] = field(default=())

    def __post_init__(self):
        wps = tuple(self.waypoints)
        object.__setattr__(self, "waypoints", wps)
        if len(wps) < 2:
            raise ValueError("a route needs at least two waypoints")
        if not self.acceptance_radius > 0:
            raise ValueError("acceptance_radius must be positive")
        for a, b in zip(wps, wps[1:]):
            d = math.hypot(b.x_n - a.x_n, b.y_n - a.y_n)
            if d == 0:
                raise ValueError("consecutive waypoints must be distinct")
            course = math.atan2(b.y_n - a.y_n, b.x_n - a.x_n)
            if abs(wrap_angle(course - a.chi_n)) > 1e-6:
                raise ValueError("waypoint course does not match the segment direction")
        lanes = tuple(tuple(map(float, ln)) for ln in self.lanes)
        if not lanes:
            lanes = ((-100.0, 100.0),) * (len(wps) - 1)
        if len(lanes) != len(wps) - 1:
            raise ValueError("need one lane bound pair per segment")
        object.__setattr__(self, "lanes", lanes)

    @classmethod
    def from_points(cls, points: Sequence[tuple[float, float]], acceptance_radius: float = 50.0,
                    lanes: Sequence[tuple[float, float]] = ()) -> "Route":
        pts = [tuple(map(float, p)) for p in points]
        wps = []
        for k, (x, y) in enumerate(pts):
            nx, ny = pts[k + 1] if k + 1 < len(pts) else (x, y)
            if k + 1 == len(pts):
                px, py = pts[k - 1]
                course = math.atan2(y - py, x - px)
            else:
                course = math.atan2(ny - y, nx - x)
            wps.append(InertialState(x, y, course))
        return cls(tuple(wps), acceptance_radius, tuple(lanes))

    def segment(self, k: int) -> WaypointSegment:
        a, b = self.waypoints[k], self.waypoints[k + 1]
        lo, hi = self.lanes[k]
        return WaypointSegment(a, math.hypot(b.x_n - a.x_n, b.y_n - a.y_n), lo, hi)

    @property
    def n_segments(self) -> int:
        return len(self.waypoints) - 1


def _rot(chi: float) -> tuple[float, float]:
    return math.cos(chi), math.sin(chi)


def to_path_frame(eta: InertialState, seg: WaypointSegment) -> PathState:
    o = seg.origin
    c, s = _rot(o.chi_n)
    dx, dy = eta.x_n - o.x_n, eta.y_n - o.y_n
    return PathState(c * dx + s * dy, -s * dx + c * dy, eta.chi_n - o.chi_n)


def to_inertial(p: PathState, seg: WaypointSegment) -> InertialState:
    o = seg.origin
    c, s = _rot(o.chi_n)
    return InertialState(o.x_n + c * p.x - s * p.y, o.y_n + s * p.x + c * p.y, p.chi + o.chi_n)


def transform_trajectory(xs: Sequence[InertialState], seg: WaypointSegment) -> list[PathState]:
    if not len(xs):
        raise ValueError("empty trajectory")
    return [to_path_frame(eta, seg) for eta in xs]


def inertial_to_path_array(etas: np.ndarray, seg: WaypointSegment, wrap: bool = True) -> np.ndarray:
    """Array form of :func:`to_path_frame` for an ``(n, 3)`` block of poses."""
    etas = np.asarray(etas, dtype=float)
    o = seg.origin
    c, s = _rot(o.chi_n)
    dx = etas[..., 0] - o.x_n
    dy = etas[..., 1] - o.y_n
    chi = etas[..., 2] - o.chi_n
    out = np.stack([c * dx + s * dy, -s * dx + c * dy, wrap_angles(chi) if wrap else chi], axis=-1)
    return out


def path_to_inertial_array(ps: np.ndarray, seg: WaypointSegment, wrap: bool = True) -> np.ndarray:
    ps = np.asarray(ps, dtype=float)
    o = seg.origin
    c, s = _rot(o.chi_n)
    x, y = ps[..., 0], ps[..., 1]
    chi = ps[..., 2] + o.chi_n
    return np.stack(
        [o.x_n + c * x - s * y, o.y_n + s * x + c * y, wrap_angles(chi) if wrap else chi], axis=-1
    )


def active_segment_index(route: Route, eta: InertialState, start: int = 0) -> int:
    k = start
    while k < route.n_segments - 1:
        seg = route.segment(k)
        if to_path_frame(eta, seg).x > seg.length - route.acceptance_radius:
            k += 1
        else:
            break
    return k


def active_segment(route: Route, eta: InertialState) -> WaypointSegment:
    """Segment the ship is currently following; the last one never expires."""
    return route.segment(active_segment_index(route, eta))
