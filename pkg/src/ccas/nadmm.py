"""Per-ship nonlinear ADMM state and update.

Each ship keeps a local trajectory (the minimizer of its own subproblem),
a global copy that is broadcast to the others, and a multiplier tying the
two together. One update is: relaxed dual half step, local solve, dual
step, global update. The global copy always equals ``local + z / beta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from ccas.frames import InertialState, WaypointSegment, inertial_to_path_array, path_to_inertial_array
from ccas.local_ocp import LocalProblem, SolveReport, solve_local
from ccas.risk_cost import CostWeights, RiskParams
from ccas.vessel import ControlAction, ControlSequence, InputBox, Trajectory, VesselParams


@dataclass(frozen=True)
class NadmmConfig:
    beta: float = 3e-4
    lam: float = 1.0
    iter_max: int = 3

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not 0 < self.lam < 2:
            raise ValueError("relaxation parameter must lie in (0, 2)")
        if self.iter_max < 1:
            raise ValueError("iter_max must be at least 1")


@dataclass
class ConsensusState:
    """Arrays are ``(N + 1, 3)``: path-frame trajectories, the multiplier in
    the same layout, and ``xi`` the inertial-frame broadcast."""

    local_traj: np.ndarray
    global_traj: np.ndarray
    z: np.ndarray
    xi: np.ndarray
    useq: ControlSequence
    segment: WaypointSegment
    iter: int = 0
    done: bool = False
    last_report: SolveReport | None = field(default=None, repr=False)

    @property
    def residual(self) -> np.ndarray:
        return self.local_traj - self.global_traj

    def max_position_gap(self) -> float:
        """Largest per-state distance between the broadcast and local plans."""
        d = self.global_traj[:, :2] - self.local_traj[:, :2]
        return float(np.max(np.hypot(d[:, 0], d[:, 1])))


@dataclass
class OcpHandles:
    """Everything the local subproblem needs besides the consensus data."""

    p_init: np.ndarray
    u_prev: ControlAction
    box: InputBox
    weights: CostWeights
    params: VesselParams
    neighbor_risk: Mapping[int, RiskParams]
    tol_g: float = 1e-6
    max_inner_iters: int = 200
    maneuvers: tuple[tuple[float, float], ...] = ()

    def alternative_starts(self, warm: ControlSequence) -> list[ControlSequence]:
        """Warm start with each ``(offset change, speed factor)`` manoeuvre
        applied from the first step, clipped to the box."""
        out = []
        for dy, us in self.maneuvers:
            u = warm.u.copy()
            u[:, 0] += dy
            u[:, 1] = np.minimum(u[:, 1], us)
            out.append(ControlSequence(self.box.clip(u)))
        return out


def predict_constant_velocity_array(eta: InertialState, speed: float, n: int, dt: float) -> np.ndarray:
    k = np.arange(n + 1) * dt * speed
    c, s = math.cos(eta.chi_n), math.sin(eta.chi_n)
    return np.column_stack([eta.x_n + c * k, eta.y_n + s * k, np.full(n + 1, eta.chi_n)])


def predict_constant_velocity(eta: InertialState, speed: float, n: int, dt: float) -> list[InertialState]:
    return [InertialState(*row) for row in predict_constant_velocity_array(eta, speed, n, dt)]


def shift_intent(xi: np.ndarray) -> np.ndarray:
    """Advance a broadcast plan by one step, extending its last leg."""
    xi = np.asarray(xi, dtype=float)
    tail = xi[-1].copy()
    if len(xi) > 1:
        tail[:2] += xi[-1, :2] - xi[-2, :2]
    return np.vstack([xi[1:], tail])


def init_consensus(eta: InertialState, speed: float, segment: WaypointSegment, warm_start: ControlSequence,
                   dt: float) -> ConsensusState:
    """Fresh state for a control period: zero multiplier, both trajectory
    copies set from a constant-velocity prediction of the own ship."""
    n = len(warm_start)
    xi = predict_constant_velocity_array(eta, speed, n, dt)
    p = inertial_to_path_array(xi, segment)
    return ConsensusState(p.copy(), p.copy(), np.zeros_like(p), xi, warm_start, segment)


def dual_half_step(cs: ConsensusState, beta: float, lam: float) -> np.ndarray:
    return cs.z - beta * (1.0 - lam) * (cs.local_traj - cs.global_traj)


def dual_step(cs: ConsensusState, beta: float) -> np.ndarray:
    """``cs.z`` holds the half-step multiplier and ``cs.local_traj`` the new
    local solution; ``cs.global_traj`` is still the previous global copy."""
    return cs.z + beta * (cs.local_traj - cs.global_traj)


def global_update(cs: ConsensusState, beta: float) -> np.ndarray:
    return cs.local_traj + cs.z / beta


def neighbor_trajectories(own_segment: WaypointSegment, n: int, dt: float,
                          neighbors_xi: Mapping[int, np.ndarray],
                          fallback_states: Mapping[int, tuple[InertialState, float]]) -> dict[int, Trajectory]:
    """Neighbour plans in the own path frame: broadcast intentions where
    available, constant-velocity predictions otherwise."""
    out = {}
    for j in sorted(set(neighbors_xi) | set(fallback_states)):
        if j in neighbors_xi:
            xi = np.asarray(neighbors_xi[j], dtype=float)
        else:
            eta, speed = fallback_states[j]
            xi = predict_constant_velocity_array(eta, speed, n, dt)
        out[j] = Trajectory(inertial_to_path_array(xi, own_segment))
    return out


def ship_iteration(cs: ConsensusState, neighbors_xi: Mapping[int, np.ndarray],
                   fallback_states: Mapping[int, tuple[InertialState, float]], cfg: NadmmConfig,
                   ocp: OcpHandles) -> ConsensusState:
    n = len(cs.useq)
    nb = neighbor_trajectories(cs.segment, n, ocp.params.dt, neighbors_xi, fallback_states)
    neighbors = [(nb[j], ocp.neighbor_risk[j]) for j in sorted(nb)]

    z_half = dual_half_step(cs, cfg.beta, cfg.lam)
    prob = LocalProblem(ocp.p_init, ocp.u_prev, neighbors, Trajectory(cs.global_traj), z_half, cfg.beta,
                        ocp.box, ocp.weights, ocp.params)
    alts = ocp.alternative_starts(cs.useq) if cs.iter == 0 else []
    rep = solve_local(prob, cs.useq, tol_g=ocp.tol_g, max_inner_iters=ocp.max_inner_iters, alternatives=alts)

    mid = replace(cs, z=z_half, local_traj=rep.traj.states)
    z_new = dual_step(mid, cfg.beta)
    mid = replace(mid, z=z_new)
    g_new = global_update(mid, cfg.beta)
    xi = path_to_inertial_array(g_new, cs.segment)
    it = cs.iter + 1
    return replace(mid, global_traj=g_new, xi=xi, useq=rep.useq, iter=it, done=it >= cfg.iter_max,
                   last_report=rep)
