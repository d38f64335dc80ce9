"""Traffic assessment and priority determination.

Every ship rates every ship (itself included) from a shared snapshot of
positions and velocities. ``rho[(i, j)]`` is the value ship ``i`` assigns to
ship ``j``. Ship ``i`` gives way to ``j`` when, in its own table, ``j`` rates
strictly higher than ``i`` itself. Decisions are made in give-way order: a
ship starts once every ship it rates below itself has finished.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from ccas.frames import InertialState, PathState, Route, WaypointSegment, active_segment_index, to_inertial, to_path_frame

HEADON_COS = math.cos(math.radians(22.5))


class EncounterSituation(enum.Enum):
    NONE = "none"
    HEADON = "headon"
    CROSSING = "crossing"


@dataclass(frozen=True)
class ProtocolParams:
    T_IC: float = 180.0
    T_ho: float = 300.0
    T_DL: int = 3
    varpi: float = 0.5
    starboard_deadband: float = 1.0

    def __post_init__(self):
        if not 0 < self.varpi < 1:
            raise ValueError("varpi must lie in (0, 1)")
        if self.T_IC < 0 or self.T_ho < 0 or self.T_DL < 1:
            raise ValueError("invalid protocol timers")


@dataclass(frozen=True)
class ShipSnapshot:
    """What every ship knows about ship ``id`` at the start of a period.

    ``segment`` is the active route segment with its lane bounds and
    ``waterway`` the same waterway expressed about its centerline.
    """

    id: int
    eta: InertialState
    speed: float
    segment: WaypointSegment
    waterway: WaypointSegment
    t_ic: float = math.inf
    weight: float = 1.0e6

    @property
    def velocity(self) -> np.ndarray:
        return self.speed * np.array([math.cos(self.eta.chi_n), math.sin(self.eta.chi_n)])


@dataclass
class PriorityTable:
    ids: tuple[int, ...]
    rho: dict[tuple[int, int], float]
    situation: dict[tuple[int, int], EncounterSituation]
    p_list: dict[tuple[int, int], bool] = field(init=False)
    waits_for: dict[int, frozenset[int]] = field(init=False)

    def __post_init__(self):
        self.p_list = {(i, j): self.rho[(i, j)] > self.rho[(i, i)]
                       for i in self.ids for j in self.ids if i != j}
        self.waits_for = {i: frozenset(k for k in self.ids if k != i and self.rho[(i, k)] < self.rho[(i, i)])
                          for i in self.ids}

    def gives_way(self, i: int, j: int) -> bool:
        return self.p_list[(i, j)]

    def consistency_violations(self) -> list[tuple[int, int]]:
        """Pairs where ``i`` gives way to ``j`` in its own table but ``j`` does
        not stand on over ``i`` in its table."""
        return [(i, j) for (i, j), gw in sorted(self.p_list.items())
                if gw and not self.rho[(j, j)] > self.rho[(j, i)]]

    def antisymmetry_violations(self) -> list[tuple[int, int]]:
        return [(i, j) for (i, j), gw in sorted(self.p_list.items()) if i < j and gw and self.p_list[(j, i)]]

    def rank(self) -> dict[int, int]:
        """Decision order as a rank: 0 for ships that wait for nobody, then the
        longest chain of ships each waits for. Ships on a waiting cycle get -1."""
        out: dict[int, int] = {}
        for i in self.ids:
            out[i] = self._depth(i, ())
        return out

    def _depth(self, i: int, path: tuple[int, ...]) -> int:
        if i in path:
            return -1
        best = 0
        for k in sorted(self.waits_for[i]):
            d = self._depth(k, path + (i,))
            if d < 0:
                return -1
            best = max(best, d + 1)
        return best


def waterway_of(seg: WaypointSegment) -> WaypointSegment:
    """The waterway of a route segment, re-expressed about its centerline."""
    c = 0.5 * (seg.lane_min + seg.lane_max)
    half = 0.5 * (seg.lane_max - seg.lane_min)
    o = to_inertial(PathState(0.0, c, 0.0), seg)
    return WaypointSegment(o, seg.length, -half, half)


def is_starboard_side(eta: InertialState, waterway: WaypointSegment, deadband: float = 1.0) -> bool:
    """``waterway`` is oriented along the ship's direction of travel, so the
    starboard half is at negative cross-track values."""
    return to_path_frame(eta, waterway).y < -deadband


def _route_point_distance(route: Route, eta: InertialState, point: tuple[float, float],
                          pass_radius: float) -> float:
    k0 = active_segment_index(route, eta)
    dist = 0.0
    px, py = point
    for k in range(k0, route.n_segments):
        seg = route.segment(k)
        here = to_path_frame(eta, seg).x if k == k0 else 0.0
        tgt = to_path_frame(InertialState(px, py, 0.0), seg)
        last = k == route.n_segments - 1
        within = tgt.x <= seg.length or last
        if abs(tgt.y) <= pass_radius and within:
            if tgt.x < here:
                return math.inf
            return dist + tgt.x - here
        dist += seg.length - here
    return math.inf


def time_to_intersection(eta: InertialState, speed: float, point: tuple[float, float] | None,
                         route: Route | None = None, pass_radius: float = 60.0) -> float:
    """Along-route time until the ship reaches ``point``.

    Without a route the ship is assumed to hold its current course. Returns
    ``inf`` when there is no point, the ship is stopped, the route misses
    the point by more than ``pass_radius`` or the point is already behind.
    """
    if point is None:
        return math.inf
    if route is None:
        c, s = math.cos(eta.chi_n), math.sin(eta.chi_n)
        dx, dy = point[0] - eta.x_n, point[1] - eta.y_n
        along, across = c * dx + s * dy, -s * dx + c * dy
        dist = along if (along >= 0 and abs(across) <= pass_radius) else math.inf
    else:
        dist = _route_point_distance(route, eta, point, pass_radius)
    if math.isinf(dist):
        return math.inf
    if dist == 0:
        return 0.0
    return dist / speed if speed > 0 else math.inf


def tcpa(p_i, v_i, p_j, v_j) -> float:
    dp = np.asarray(p_j, float)[:2] - np.asarray(p_i, float)[:2]
    dv = np.asarray(v_j, float) - np.asarray(v_i, float)
    n2 = float(dv @ dv)
    if math.sqrt(n2) < 1e-6:
        return math.inf
    return -float(dp @ dv) / n2


def classify_headon(eta_i: InertialState, v_i, eta_j: InertialState, v_j, T_ho: float,
                    lane: WaypointSegment) -> bool:
    """Opposing courses within 22.5 degrees, closing within ``T_ho`` and ship
    ``j`` inside the lane bounds of ``lane`` (ship ``i``'s segment)."""
    v_i = np.asarray(v_i, float)
    v_j = np.asarray(v_j, float)
    ni, nj = float(np.linalg.norm(v_i)), float(np.linalg.norm(v_j))
    if ni == 0 or nj == 0:
        return False
    if not float(v_i @ v_j) / (ni * nj) < -HEADON_COS:
        return False
    t = tcpa(eta_i.as_array(), v_i, eta_j.as_array(), v_j)
    if not 0 <= t <= T_ho:
        return False
    y = to_path_frame(eta_j, lane).y
    return lane.lane_min <= y <= lane.lane_max


def comes_from_starboard(v_i, v_j) -> bool:
    """True when a ship moving with ``v_i`` approaches from the starboard side
    of a ship moving with ``v_j``: its heading points to the left of ``v_j``."""
    return float(v_j[0] * v_i[1] - v_j[1] * v_i[0]) > 0


def comes_from_port(v_i, v_j) -> bool:
    return float(v_j[0] * v_i[1] - v_j[1] * v_i[0]) < 0


def pair_situation(a: ShipSnapshot, b: ShipSnapshot, params: ProtocolParams) -> EncounterSituation:
    """Same label from either side; head-on wins when both tests pass."""
    ho = (classify_headon(a.eta, a.velocity, b.eta, b.velocity, params.T_ho, a.segment)
          and classify_headon(b.eta, b.velocity, a.eta, a.velocity, params.T_ho, b.segment))
    if ho:
        return EncounterSituation.HEADON
    if a.t_ic < params.T_IC and b.t_ic < params.T_IC:
        return EncounterSituation.CROSSING
    return EncounterSituation.NONE


def assign_priorities(ships: Sequence[ShipSnapshot], params: ProtocolParams = ProtocolParams()) -> PriorityTable:
    ids = tuple(s.id for s in ships)
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate ship ids")
    by_id = {s.id: s for s in ships}
    base = {s.id: 1.0 if is_starboard_side(s.eta, s.waterway, params.starboard_deadband) else 0.0 for s in ships}
    rho: dict[tuple[int, int], float] = {}
    situation: dict[tuple[int, int], EncounterSituation] = {}
    for i in ids:
        rho[(i, i)] = base[i]
        for j in ids:
            if j == i:
                continue
            r = base[j]
            sit = pair_situation(by_id[i], by_id[j], params)
            situation[(i, j)] = sit
            if sit is EncounterSituation.CROSSING and r < 1:
                vi, vj = by_id[i].velocity, by_id[j].velocity
                # a ship that sees the other approach from its starboard gives way to it
                if comes_from_starboard(vi, vj):
                    r -= params.varpi
                elif comes_from_port(vi, vj):
                    r += params.varpi
            rho[(i, j)] = r
    return PriorityTable(ids, rho, situation)


def eligible_ships(table: PriorityTable, done: Mapping[int, bool],
                   released: Iterable[int] = ()) -> set[int]:
    """Ships that may update now: not done, and either released by deadlock
    resolution or every ship they wait for is done."""
    rel = set(released)
    return {i for i in table.ids
            if not done.get(i, False) and (i in rel or all(done.get(k, False) for k in table.waits_for[i]))}


def detect_deadlock(table: PriorityTable, done: Mapping[int, bool], idle_slots: int, T_DL: int,
                    released: Iterable[int] = ()) -> bool:
    if all(done.get(i, False) for i in table.ids):
        return False
    return not eligible_ships(table, done, released) and idle_slots >= T_DL


def resolve_deadlock(weights: Mapping[int, float], done: Mapping[int, bool]) -> int:
    candidates = [(w, i) for i, w in weights.items() if not done.get(i, False)]
    if not candidates:
        raise ValueError("every ship has already decided")
    return min(candidates)[1]
