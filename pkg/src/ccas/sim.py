"""Receding-horizon scenario runner with metrics and run logs.

Each control period: ships exchange position reports, every ship derives
the same priority table, the ships run their NADMM iterations in give-way
order over the bus, and each applies the first input of its plan to the
plant. Everything needed to recompute metrics is kept in :class:`SimLog`.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from ccas.bus import Bus, DecisionDone, IntentBroadcast, PositionReport, WeightExchange
from ccas.frames import (InertialState, PathState, active_segment_index, to_inertial, to_path_frame, wrap_angle,
                         wrap_angles)
from ccas.local_ocp import SolverError
from ccas.nadmm import ConsensusState, OcpHandles, init_consensus, ship_iteration, shift_intent
from ccas.risk_cost import collision_risk
from ccas.scenario import ScenarioConfig
from ccas.tapd import (EncounterSituation, PriorityTable, ShipSnapshot, assign_priorities, detect_deadlock,
                       eligible_ships, resolve_deadlock, time_to_intersection, waterway_of)
from ccas.vessel import ControlAction, ControlSequence, InputBox, step_array

CSV_COLUMNS = ("step", "time_s", "ship_id", "x_n", "y_n", "chi_n", "u_y", "u_s", "epsilon", "residual",
               "priority_rank", "event")


class SimulationError(RuntimeError):
    """A solver failure during :func:`run`; ``log`` holds the steps completed."""

    def __init__(self, msg: str, log: "SimLog"):
        super().__init__(msg)
        self.log = log


@dataclass
class SimLog:
    """Per step ``t`` and ship ``m``: the state at the start of the step, the
    input applied during it and the quantities computed from them.

    ``states`` and ``courses`` carry one extra row for the state after the
    last step. ``courses`` is the course of the active route segment.
    """

    scenario: str
    ship_ids: tuple[int, ...]
    dt: float
    states: np.ndarray
    courses: np.ndarray
    segments: np.ndarray
    inputs: np.ndarray
    epsilon: np.ndarray
    residual: np.ndarray
    rank: np.ndarray
    risk: np.ndarray
    events: list[list[str]]
    priorities: list[dict[str, Any]] = field(default_factory=list)
    half_sizes: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    config_digest: str = ""
    echo: Mapping[str, Any] = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return len(self.inputs)

    def index(self, ship_id: int) -> int:
        return self.ship_ids.index(ship_id)

    def truncated(self, n: int) -> "SimLog":
        return SimLog(self.scenario, self.ship_ids, self.dt, self.states[:n + 1], self.courses[:n + 1],
                      self.segments[:n + 1], self.inputs[:n], self.epsilon[:n], self.residual[:n], self.rank[:n],
                      self.risk[:n], self.events[:n], self.priorities[:n], self.half_sizes, self.config_digest,
                      self.echo)


def safety_index(i: int, states: np.ndarray, course_i: float, half_length: float = 51.5,
                 half_width: float = 8.6) -> float:
    """Signed clearance of the nearest other ship from ship ``i``'s box,
    measured along and across ship ``i``'s path; ``inf`` without neighbours."""
    states = np.asarray(states, dtype=float)
    if len(states) < 2:
        return math.inf
    c, s = math.cos(course_i), math.sin(course_i)
    d = np.delete(states[:, :2], i, axis=0) - states[i, :2]
    dx = np.abs(c * d[:, 0] + s * d[:, 1])
    dy = np.abs(-s * d[:, 0] + c * d[:, 1])
    return float(np.min(np.maximum(dx - half_length, dy - half_width)))


def _pair_offsets(log: SimLog, a: int, b: int) -> np.ndarray:
    ia, ib = log.index(a), log.index(b)
    ch = log.courses[:-1, ia]
    d = log.states[:-1, ib, :2] - log.states[:-1, ia, :2]
    c, s = np.cos(ch), np.sin(ch)
    return np.column_stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1]])


def min_x_distance(log: SimLog, pair: tuple[int, int], max_lateral: float | None = None) -> float:
    """Smallest along-track separation of ``pair[1]`` in ``pair[0]``'s path
    frame over the run.

    With ``max_lateral`` only steps whose cross-track separation is below it
    count, which turns the measure into the along-track clearance kept while
    the ships are actually abreast. ``inf`` if no step qualifies.
    """
    d = _pair_offsets(log, *pair)
    ok = np.ones(len(d), bool) if max_lateral is None else np.abs(d[:, 1]) < max_lateral
    return float(np.min(np.abs(d[ok, 0]))) if ok.any() else math.inf


def min_y_distance(log: SimLog, pair: tuple[int, int]) -> float:
    """Cross-track separation at the step of smallest along-track separation."""
    d = _pair_offsets(log, *pair)
    return float(abs(d[int(np.argmin(np.abs(d[:, 0]))), 1]))


def course_deviation(log: SimLog, ship_id: int) -> np.ndarray:
    i = log.index(ship_id)
    return np.abs(wrap_angles(log.states[:, i, 2] - log.courses[:, i]))


def passage_time(log: SimLog, ship_id: int, point: tuple[float, float]) -> float:
    """First time the ship draws level with ``point`` along its course line,
    linearly interpolated between steps; ``inf`` if it never does."""
    i = log.index(ship_id)
    ch = log.courses[:, i]
    d = np.asarray(point) - log.states[:, i, :2]
    along = np.cos(ch) * d[:, 0] + np.sin(ch) * d[:, 1]
    idx = np.flatnonzero(along <= 0)
    if not len(idx):
        return math.inf
    k = int(idx[0])
    if k == 0:
        return 0.0
    a0, a1 = along[k - 1], along[k]
    return float(log.dt * (k - 1 + a0 / (a0 - a1)))


def intersection_passage_times(log: SimLog, point: tuple[float, float]) -> dict[int, float]:
    return {sid: passage_time(log, sid, point) for sid in log.ship_ids}


def deadlock_events(log: SimLog) -> int:
    """Number of periods in which a deadlock was detected."""
    return sum(1 for row in log.events if any("deadlock" in e.split(";") for e in row))


def summary(log: SimLog) -> dict[str, Any]:
    """Per-ship and per-pair figures, computed from the log alone."""
    ships = {}
    for m, sid in enumerate(log.ship_ids):
        ships[sid] = {
            "min_epsilon": float(np.min(log.epsilon[:, m])),
            "max_course_dev": float(np.max(course_deviation(log, sid))),
            "min_u_s": float(np.min(log.inputs[:, m, 1])),
            "max_abs_u_y": float(np.max(np.abs(log.inputs[:, m, 0]))),
            "events": sum(1 for row in log.events if row[m]),
        }
    pairs = {}
    for a in log.ship_ids:
        for b in log.ship_ids:
            if a < b:
                ia = log.index(a)
                lat = float(log.half_sizes[ia, 1] + log.half_sizes[log.index(b), 1]) if len(log.half_sizes) else None
                pairs[(a, b)] = min_x_distance(log, (a, b), lat)
    return {"ships": ships, "min_x_distance": pairs, "deadlocks": deadlock_events(log)}


def format_summary(s: Mapping[str, Any]) -> str:
    out = io.StringIO()
    out.write(f"{'ship':>4}  {'min_eps[m]':>10}  {'max_dchi[rad]':>13}  {'min_u_s':>7}  {'events':>6}\n")
    for sid, r in s["ships"].items():
        out.write(f"{sid:>4}  {r['min_epsilon']:>10.2f}  {r['max_course_dev']:>13.4f}  {r['min_u_s']:>7.3f}  "
                  f"{r['events']:>6}\n")
    for (a, b), v in s["min_x_distance"].items():
        out.write(f"min x-distance {a}-{b}: {v:.2f} m\n")
    out.write(f"deadlock events: {s['deadlocks']}\n")
    return out.getvalue()


@dataclass
class _Ship:
    cfg: Any
    eta: np.ndarray
    seg_idx: int
    u_prev: ControlAction
    plan: ControlSequence


def _segment(sh: _Ship):
    return sh.cfg.route.segment(sh.seg_idx)


def _box(sh: _Ship) -> InputBox:
    seg = _segment(sh)
    return InputBox.for_lane(seg.lane_min, seg.lane_max, sh.cfg.lane_margin, sh.cfg.s_min, sh.cfg.s_max)


def run(cfg: ScenarioConfig, progress: Callable[[int, int], None] | None = None) -> SimLog:
    ids = cfg.ship_ids
    M, N, T = len(ids), cfg.horizon, cfg.total_steps
    ships = {}
    for sc in cfg.ships:
        eta = sc.initial.as_array()
        k = active_segment_index(sc.route, sc.initial)
        ships[sc.id] = _Ship(sc, eta, k, ControlAction(0.0, 1.0), ControlSequence.constant(ControlAction(0.0, 1.0), N))
    risk_of = {sc.id: sc.risk for sc in cfg.ships}

    states = np.zeros((T + 1, M, 3))
    courses = np.zeros((T + 1, M))
    segments = np.zeros((T + 1, M), dtype=np.int64)
    inputs = np.zeros((T, M, 2))
    eps = np.zeros((T, M))
    resid = np.zeros((T, M))
    rank = np.zeros((T, M), dtype=np.int64)
    risk = np.zeros((T, M, M))
    events: list[list[str]] = []
    priorities: list[dict[str, Any]] = []
    half = np.array([[sc.params.half_length, sc.params.half_width] for sc in cfg.ships])

    def make_log(n: int) -> SimLog:
        return SimLog(cfg.name, ids, cfg.dt, states[:n + 1].copy(), courses[:n + 1].copy(), segments[:n + 1].copy(),
                      inputs[:n].copy(), eps[:n].copy(), resid[:n].copy(), rank[:n].copy(), risk[:n].copy(),
                      [list(r) for r in events[:n]], list(priorities[:n]), half.copy(), cfg.digest(),
                      dict(cfg.source))

    bus = Bus(ids)
    # last period's broadcasts, advanced one step: the prior for ships not yet heard from
    prior: dict[int, np.ndarray] = {}
    for t in range(T):
        for m, sid in enumerate(ids):
            sh = ships[sid]
            sh.seg_idx = active_segment_index(sh.cfg.route, InertialState(*sh.eta), sh.seg_idx)
            states[t, m] = sh.eta
            courses[t, m] = _segment(sh).course
            segments[t, m] = sh.seg_idx
        for m, sid in enumerate(ids):
            eps[t, m] = safety_index(m, states[t], courses[t, m], *half[m])

        # shared snapshot via position reports
        for sid in ids:
            sh = ships[sid]
            bus.broadcast(sid, PositionReport(InertialState(*sh.eta), sh.cfg.params.nominal_speed * sh.u_prev.u_s))
        inbox = bus.advance_slot()
        reports = {sid: (InertialState(*ships[sid].eta),
                         ships[sid].cfg.params.nominal_speed * ships[sid].u_prev.u_s) for sid in ids}
        for sid in ids:
            for msg in inbox[sid]:
                reports[msg.sender] = (msg.payload.eta, msg.payload.speed)
        snaps = []
        for sid in ids:
            sh = ships[sid]
            eta_s, spd = reports[sid]
            seg = _segment(sh)
            t_ic = time_to_intersection(eta_s, spd, cfg.intersection_point, sh.cfg.route)
            snaps.append(ShipSnapshot(sid, eta_s, spd, seg, waterway_of(seg), t_ic, sh.cfg.params.weight))
        table = assign_priorities(snaps, cfg.protocol)
        ev = {sid: [] for sid in ids}
        for i, j in table.consistency_violations():
            ev[i].append(f"inconsistent:{j}")
        ranks = table.rank()

        cs: dict[int, ConsensusState] = {}
        handles: dict[int, OcpHandles] = {}
        for sid in ids:
            sh = ships[sid]
            seg = _segment(sh)
            crossing = any(table.situation[(sid, j)] is EncounterSituation.CROSSING for j in ids if j != sid)
            box = _box(sh)
            warm = ControlSequence(box.clip(sh.plan.u))
            eta_s, spd = reports[sid]
            cs[sid] = init_consensus(eta_s, spd, seg, warm, cfg.dt)
            p_init = to_path_frame(eta_s, seg).as_array()
            handles[sid] = OcpHandles(p_init, sh.u_prev, box, sh.cfg.weights_for(crossing), sh.cfg.params,
                                      {j: risk_of[j] for j in ids if j != sid}, cfg.tol_g, cfg.max_inner_iters,
                                      cfg.maneuvers)

        try:
            _negotiate(cfg, table, bus, cs, handles, reports, prior, ev)
        except SolverError as e:
            raise SimulationError(f"step {t}: {e}", make_log(t)) from e

        for m, sid in enumerate(ids):
            sh = ships[sid]
            u = cs[sid].useq.u[0]
            seg = _segment(sh)
            p = to_path_frame(InertialState(*sh.eta), seg).as_array()
            p1 = step_array(p, u, sh.cfg.params)
            sh.eta = to_inertial(PathState(*p1), seg).as_array()
            sh.u_prev = ControlAction(float(u[0]), float(u[1]))
            sh.plan = cs[sid].useq.shifted()
            if cs[sid].iter:
                prior[sid] = shift_intent(cs[sid].xi)
            else:
                prior.pop(sid, None)
            inputs[t, m] = u
            resid[t, m] = cs[sid].max_position_gap() if cs[sid].iter else 0.0
            rank[t, m] = ranks[sid]
            for n_, other in enumerate(ids):
                if other != sid:
                    d = states[t, n_, :2] - states[t, m, :2]
                    c, s = math.cos(courses[t, m]), math.sin(courses[t, m])
                    risk[t, m, n_] = collision_risk(c * d[0] + s * d[1], -s * d[0] + c * d[1], 0, risk_of[other])
        events.append([";".join(ev[sid]) for sid in ids])
        priorities.append({
            "rho": {f"{i},{j}": v for (i, j), v in sorted(table.rho.items())},
            "situation": {f"{i},{j}": s.value for (i, j), s in sorted(table.situation.items())},
        })
        if progress is not None:
            progress(t + 1, T)

    for m, sid in enumerate(ids):
        sh = ships[sid]
        sh.seg_idx = active_segment_index(sh.cfg.route, InertialState(*sh.eta), sh.seg_idx)
        states[T, m] = sh.eta
        courses[T, m] = _segment(sh).course
        segments[T, m] = sh.seg_idx
    return make_log(T)


def _negotiate(cfg: ScenarioConfig, table: PriorityTable, bus: Bus, cs: dict[int, ConsensusState],
               handles: dict[int, OcpHandles], reports: Mapping[int, tuple[InertialState, float]],
               prior: Mapping[int, np.ndarray], ev: dict[int, list[str]]) -> None:
    """One period of the serial iterative scheme. Updates ``cs`` in place."""
    ids = table.ids
    M = len(ids)
    done = {i: False for i in ids}
    intents: dict[int, dict[int, np.ndarray]] = {i: {j: x for j, x in prior.items() if j != i} for i in ids}
    released: set[int] = set()
    idle = 0
    weight = {i: handles[i].params.weight for i in ids}
    cap = M * (cfg.nadmm.iter_max + 1) + (M + 1) * (cfg.protocol.T_DL + 2)
    for _ in range(cap):
        if all(done.values()):
            return
        elig = eligible_ships(table, done, released)
        if not elig:
            idle += 1
            if detect_deadlock(table, done, idle, cfg.protocol.T_DL, released):
                for i in ids:
                    if not done[i]:
                        ev[i].append("deadlock")
                if not cfg.deadlock_resolution:
                    break
                pending = {i: weight[i] for i in ids if not done[i]}
                for i in sorted(pending):
                    bus.broadcast(i, WeightExchange(pending[i]))
                bus.advance_slot()
                pick = resolve_deadlock(pending, done)
                released.add(pick)
                ev[pick].append("released")
                idle = 0
                continue
            bus.advance_slot()
            continue
        idle = 0
        for i in sorted(elig):
            fallback = {j: reports[j] for j in ids if j != i and j not in intents[i]}
            cs[i] = ship_iteration(cs[i], intents[i], fallback, cfg.nadmm, handles[i])
            bus.broadcast(i, IntentBroadcast(cs[i].xi))
            if cs[i].done:
                bus.broadcast(i, DecisionDone())
        inbox = bus.advance_slot()
        for i in ids:
            for msg in inbox[i]:
                if isinstance(msg.payload, IntentBroadcast):
                    intents[i][msg.sender] = msg.payload.xi
                elif isinstance(msg.payload, DecisionDone):
                    done[msg.sender] = True
        for i in elig:
            if cs[i].done:
                done[i] = True
    for i in ids:
        if not done[i]:
            ev[i].append("stalled")


def replay(log: SimLog, cfg: ScenarioConfig) -> float:
    """Max deviation between logged states and a re-simulation of the plant
    from the logged inputs, one step at a time."""
    err = 0.0
    by_id = {sc.id: sc for sc in cfg.ships}
    for m, sid in enumerate(log.ship_ids):
        sc = by_id[sid]
        for t in range(log.n_steps):
            seg = sc.route.segment(int(log.segments[t, m]))
            p = to_path_frame(InertialState(*log.states[t, m]), seg).as_array()
            p1 = step_array(p, log.inputs[t, m], sc.params)
            nxt = to_inertial(PathState(*p1), seg).as_array()
            d = nxt - log.states[t + 1, m]
            d[2] = wrap_angle(d[2])
            err = max(err, float(np.max(np.abs(d))))
    return err


# serialization

def _num(v: float):
    return None if not math.isfinite(v) else float(v)


def _fmt(v: float) -> str:
    return "" if not math.isfinite(v) else repr(float(v))


def log_to_dict(log: SimLog) -> dict[str, Any]:
    return {
        "scenario": log.scenario,
        "config_digest": log.config_digest,
        "ship_ids": list(log.ship_ids),
        "dt": log.dt,
        "states": log.states.tolist(),
        "courses": log.courses.tolist(),
        "segments": log.segments.tolist(),
        "inputs": log.inputs.tolist(),
        "epsilon": [[_num(v) for v in row] for row in log.epsilon],
        "residual": log.residual.tolist(),
        "priority_rank": log.rank.tolist(),
        "risk": log.risk.tolist(),
        "events": log.events,
        "priorities": log.priorities,
        "half_sizes": log.half_sizes.tolist(),
        "scenario_echo": log.echo,
    }


def log_from_dict(d: Mapping[str, Any]) -> SimLog:
    n_ship = len(d["ship_ids"])
    eps = np.array([[math.inf if v is None else v for v in row] for row in d["epsilon"]], dtype=float)
    return SimLog(
        d["scenario"], tuple(d["ship_ids"]), float(d["dt"]),
        np.array(d["states"], dtype=float).reshape(-1, n_ship, 3),
        np.array(d["courses"], dtype=float).reshape(-1, n_ship),
        np.array(d["segments"], dtype=np.int64).reshape(-1, n_ship),
        np.array(d["inputs"], dtype=float).reshape(-1, n_ship, 2),
        eps.reshape(-1, n_ship),
        np.array(d["residual"], dtype=float).reshape(-1, n_ship),
        np.array(d["priority_rank"], dtype=np.int64).reshape(-1, n_ship),
        np.array(d["risk"], dtype=float).reshape(-1, n_ship, n_ship),
        [list(r) for r in d["events"]], list(d["priorities"]),
        np.array(d["half_sizes"], dtype=float).reshape(-1, 2), d["config_digest"], d["scenario_echo"],
    )


def write_log(log: SimLog, path: str | Path, fmt: str | None = None) -> Path:
    """Write ``log`` as CSV (one row per step and ship) or JSON (everything).

    The format comes from ``fmt`` or the file extension; a path without an
    extension is rejected. Output is byte-stable for identical logs.
    """
    path = Path(path)
    if not path.suffix:
        raise ValueError(f"{path}: log path needs a .csv or .json extension")
    fmt = fmt or path.suffix[1:].lower()
    if fmt == "json":
        text = json.dumps(log_to_dict(log), sort_keys=True, indent=1, allow_nan=False) + "\n"
    elif fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for t in range(log.n_steps):
            for m, sid in enumerate(log.ship_ids):
                x, y, chi = log.states[t, m]
                w.writerow([t, _fmt(t * log.dt), sid, _fmt(x), _fmt(y), _fmt(chi), _fmt(log.inputs[t, m, 0]),
                            _fmt(log.inputs[t, m, 1]), _fmt(log.epsilon[t, m]), _fmt(log.residual[t, m]),
                            int(log.rank[t, m]), log.events[t][m]])
        text = buf.getvalue()
    else:
        raise ValueError(f"unknown log format {fmt!r}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def read_log(path: str | Path) -> SimLog:
    return log_from_dict(json.loads(Path(path).read_text()))
