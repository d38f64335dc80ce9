"""Scenario documents: JSON in, validated :class:`ScenarioConfig` out.

All physical defaults are applied here; scenario files only carry what they
change. See ``docs/scenario_schema.md`` for the document layout.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from ccas.frames import InertialState, Route, to_path_frame
from ccas.nadmm import NadmmConfig
from ccas.risk_cost import CostWeights, RiskParams
from ccas.tapd import EncounterSituation, ProtocolParams
from ccas.vessel import VesselParams

SCHEMA_VERSION = 1

HEADON_WEIGHTS = CostWeights(K_y=1e-2, K_s=2e-2)
CROSSING_WEIGHTS = CostWeights(K_y=5.0, K_s=2e-2)
# (offset change toward starboard, speed factor) offered to the local solver as extra starts
DEFAULT_MANEUVERS = ((-10.0, 1.0), (-20.0, 1.0), (-30.0, 1.0), (0.0, 0.7), (0.0, 0.4))


class ConfigError(ValueError):
    """Invalid or unreadable scenario document."""


@dataclass(frozen=True)
class Waterway:
    id: str
    centerline: tuple[tuple[float, float], tuple[float, float]]
    half_width: float


@dataclass(frozen=True)
class ShipConfig:
    id: int
    params: VesselParams
    route: Route
    initial: InertialState
    risk: RiskParams
    weights: Mapping[EncounterSituation, CostWeights]
    lane_margin: float
    s_min: float = 0.1
    s_max: float = 1.0

    def weights_for(self, crossing: bool) -> CostWeights:
        return self.weights[EncounterSituation.CROSSING if crossing else EncounterSituation.HEADON]


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    ships: tuple[ShipConfig, ...]
    horizon: int = 40
    dt: float = 1.0
    total_steps: int = 200
    intersection_point: tuple[float, float] | None = None
    protocol: ProtocolParams = ProtocolParams()
    nadmm: NadmmConfig = NadmmConfig()
    deadlock_resolution: bool = True
    tol_g: float = 1e-6
    max_inner_iters: int = 200
    maneuvers: tuple[tuple[float, float], ...] = DEFAULT_MANEUVERS
    source: Mapping[str, Any] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        ids = [s.id for s in self.ships]
        if not ids:
            raise ConfigError("a scenario needs at least one ship")
        if len(set(ids)) != len(ids):
            raise ConfigError("ship ids must be unique")
        if self.horizon < 1 or self.total_steps < 1 or not self.dt > 0:
            raise ConfigError("horizon, total_steps and dt must be positive")

    @property
    def ship_ids(self) -> tuple[int, ...]:
        return tuple(s.id for s in self.ships)

    def digest(self) -> str:
        blob = json.dumps(self.source, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, *, iter_max: int | None = None, beta: float | None = None,
                       total_steps: int | None = None) -> "ScenarioConfig":
        """Apply command-line style overrides, keeping ``source`` in sync so the
        digest reflects what actually ran."""
        src = copy.deepcopy(dict(self.source))
        steps = self.total_steps if total_steps is None else total_steps
        if iter_max is not None:
            src.setdefault("nadmm", {})["iter_max"] = iter_max
        if beta is not None:
            src.setdefault("nadmm", {})["beta"] = beta
        if total_steps is not None:
            src["total_steps"] = total_steps
        try:
            nad = self.nadmm
            if iter_max is not None:
                nad = replace(nad, iter_max=iter_max)
            if beta is not None:
                nad = replace(nad, beta=beta)
            return replace(self, nadmm=nad, total_steps=steps, source=src)
        except ValueError as e:
            raise ConfigError(str(e)) from e


def _build(cls, data: Mapping[str, Any] | None, where: str, base=None):
    data = dict(data or {})
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(unknown)}")
    try:
        return replace(base, **data) if base is not None else cls(**data)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from e


def _lanes_for(route_pts, ww: Waterway) -> list[tuple[float, float]]:
    """Lane bounds of each route segment, as cross-track offsets in that
    segment's frame, from a straight waterway of the given half width."""
    route = Route.from_points(route_pts)
    (ax, ay), (bx, by) = ww.centerline
    ww_course = math.atan2(by - ay, bx - ax)
    lanes = []
    for k in range(route.n_segments):
        seg = route.segment(k)
        if abs(math.sin(seg.course - ww_course)) > 1e-6:
            raise ConfigError(f"route segment {k} is not parallel to waterway {ww.id!r}")
        c = to_path_frame(InertialState(ax, ay, 0.0), seg).y
        lanes.append((c - ww.half_width, c + ww.half_width))
    return lanes


def _pair(v, where: str) -> tuple[float, float]:
    try:
        x, y = v
        return float(x), float(y)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: expected [x, y]") from e


def parse_scenario(doc: Mapping[str, Any], name: str | None = None) -> ScenarioConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("scenario document must be a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")
    known = {"schema_version", "name", "description", "horizon", "dt", "total_steps", "intersection_point",
             "protocol", "nadmm", "deadlock_resolution", "waterways", "weights", "ships", "solver", "maneuvers"}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"unknown top-level field(s) {', '.join(unknown)}")

    dt = float(doc.get("dt", 1.0))
    waterways = {}
    for w in doc.get("waterways", []):
        try:
            ww = Waterway(str(w["id"]), (_pair(w["centerline"][0], "centerline"),
                                         _pair(w["centerline"][1], "centerline")), float(w["half_width"]))
        except (KeyError, IndexError, TypeError) as e:
            raise ConfigError(f"waterway entry {w!r} is incomplete") from e
        if not ww.half_width > 0 or ww.centerline[0] == ww.centerline[1]:
            raise ConfigError(f"waterway {ww.id!r} is degenerate")
        waterways[ww.id] = ww

    wdoc = doc.get("weights", {})
    weight_sets = {
        EncounterSituation.HEADON: _build(CostWeights, wdoc.get("headon"), "weights.headon", HEADON_WEIGHTS),
        EncounterSituation.CROSSING: _build(CostWeights, wdoc.get("crossing"), "weights.crossing",
                                            CROSSING_WEIGHTS),
    }

    ships = []
    for k, s in enumerate(doc.get("ships", [])):
        where = f"ships[{k}]"
        if "id" not in s or "route" not in s:
            raise ConfigError(f"{where}: 'id' and 'route' are required")
        extra = sorted(set(s) - {"id", "route", "waterway", "start", "vessel", "risk", "weights", "lane_margin",
                                 "speed_bounds", "acceptance_radius"})
        if extra:
            raise ConfigError(f"{where}: unknown field(s) {', '.join(extra)}")
        pts = [_pair(p, f"{where}.route") for p in s["route"]]
        vdoc = dict(s.get("vessel", {}))
        vdoc.setdefault("dt", dt)
        params = _build(VesselParams, vdoc, f"{where}.vessel")
        if params.dt != dt:
            raise ConfigError(f"{where}: vessel dt must equal the scenario dt")
        lanes: list = []
        if "waterway" in s:
            wid = s["waterway"]
            if wid not in waterways:
                raise ConfigError(f"{where}: unknown waterway {wid!r}")
            try:
                lanes = _lanes_for(pts, waterways[wid])
            except ValueError as e:
                raise ConfigError(f"{where}: {e}") from e
        try:
            route = Route.from_points(pts, float(s.get("acceptance_radius", 50.0)), lanes)
        except ValueError as e:
            raise ConfigError(f"{where}.route: {e}") from e
        if "start" in s:
            st = s["start"]
            x, y = _pair(st[:2], f"{where}.start")
            chi = float(st[2]) if len(st) > 2 else route.waypoints[0].chi_n
            initial = InertialState(x, y, chi)
        else:
            initial = route.waypoints[0]
        sw = s.get("weights", {})
        weights = {
            EncounterSituation.HEADON: _build(CostWeights, sw.get("headon"), f"{where}.weights.headon",
                                              weight_sets[EncounterSituation.HEADON]),
            EncounterSituation.CROSSING: _build(CostWeights, sw.get("crossing"), f"{where}.weights.crossing",
                                                weight_sets[EncounterSituation.CROSSING]),
        }
        s_min, s_max = s.get("speed_bounds", (0.1, 1.0))
        margin = float(s.get("lane_margin", params.half_width))
        ships.append(ShipConfig(int(s["id"]), params, route, initial,
                                _build(RiskParams, s.get("risk"), f"{where}.risk"), weights, margin,
                                float(s_min), float(s_max)))

    ip = doc.get("intersection_point")
    solver = dict(doc.get("solver", {}))
    bad = sorted(set(solver) - {"tol_g", "max_inner_iters"})
    if bad:
        raise ConfigError(f"solver: unknown field(s) {', '.join(bad)}")
    try:
        maneuvers = tuple((float(a), float(b)) for a, b in doc.get("maneuvers", DEFAULT_MANEUVERS))
    except (TypeError, ValueError) as e:
        raise ConfigError("maneuvers: expected a list of [offset change, speed factor] pairs") from e
    nad = dict(doc.get("nadmm", {}))
    if "lambda" in nad:
        nad["lam"] = nad.pop("lambda")
    try:
        return ScenarioConfig(
            name=str(doc.get("name", name or "scenario")),
            ships=tuple(sorted(ships, key=lambda c: c.id)),
            horizon=int(doc.get("horizon", 40)),
            dt=dt,
            total_steps=int(doc.get("total_steps", 200)),
            intersection_point=None if ip is None else _pair(ip, "intersection_point"),
            protocol=_build(ProtocolParams, doc.get("protocol"), "protocol"),
            nadmm=_build(NadmmConfig, nad, "nadmm"),
            deadlock_resolution=bool(doc.get("deadlock_resolution", True)),
            tol_g=float(solver.get("tol_g", 1e-6)),
            max_inner_iters=int(solver.get("max_inner_iters", 200)),
            maneuvers=maneuvers,
            source=copy.deepcopy(dict(doc)),
        )
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from e


def builtin_names() -> list[str]:
    root = resources.files("ccas") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_scenario(ref: str | Path) -> ScenarioConfig:
    """Load a scenario from a file path or a built-in name."""
    p = Path(ref)
    if p.suffix == ".json" or p.exists():
        try:
            text = p.read_text()
        except OSError as e:
            raise ConfigError(f"cannot read {p}: {e.strerror or e}") from e
        label = p.stem
    else:
        name = str(ref)
        if name not in builtin_names():
            raise ConfigError(f"no scenario file or built-in scenario named {name!r}")
        text = (resources.files("ccas") / "scenarios" / f"{name}.json").read_text()
        label = name
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{label}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
    return parse_scenario(doc, label)
