"""Collision risk, MPC cost terms and their gradients.

The cost of one ship over a horizon is the sum of

* ``cost_ca``: discounted Gaussian collision risk against every neighbour,
* ``cost_effort``: quadratic penalties on offset changes and speed loss,
* ``cost_behavior``: saturating penalties that make small manoeuvres
  unattractive, plus a slowly growing penalty on port-ward offset changes.

Neighbour trajectories are fixed parameters here; only the own inputs are
decision variables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ccas import kernels
from ccas.vessel import ControlAction, ControlSequence, Trajectory, VesselParams, rollout, rollout_jacobian


@dataclass(frozen=True)
class RiskParams:
    """Risk shape a ship presents to others (``alpha_*`` scale with its size)."""

    K_ca: float = 10.0
    K_d: float = 5.0
    alpha_x: float = 120.0**2
    alpha_y: float = 20.0**2

    def __post_init__(self):
        if not (self.K_ca > 0 and self.K_d >= 0 and self.alpha_x > 0 and self.alpha_y > 0):
            raise ValueError("invalid risk parameters")

    def as_array(self) -> np.ndarray:
        return np.array([self.K_ca, self.K_d, self.alpha_x, self.alpha_y])


@dataclass(frozen=True)
class CostWeights:
    K_y: float = 1e-2
    K_s: float = 2e-2
    mu1: float = 1.0
    mu2: float = 1.0
    b2_r1: float = 0.1
    b2_r2: float = 2.0 - math.pi
    gamma_s: float = 0.01
    gamma_y: float = 1.0

    def __post_init__(self):
        if min(self.K_y, self.K_s, self.mu1, self.mu2, self.b2_r1) < 0:
            raise ValueError("cost weights must be non-negative")
        if not (self.gamma_s > 0 and self.gamma_y > 0):
            raise ValueError("gamma_s and gamma_y must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.K_y, self.K_s, self.mu1, self.mu2, self.b2_r1, self.b2_r2,
                         self.gamma_s, self.gamma_y])


Neighbor = tuple[Trajectory, RiskParams]


def collision_risk(dx: float, dy: float, k: int, rp: RiskParams) -> float:
    if k < 0:
        raise ValueError("step index must be non-negative")
    return rp.K_ca / math.sqrt(1.0 + rp.K_d * k) * math.exp(-dx * dx / rp.alpha_x - dy * dy / rp.alpha_y)


def b1(x, r):
    return 1.0 - np.exp(-np.square(x) / r)


def b2(x, r1, r2):
    return r1 * x * (np.tanh(x + r2) + 1.0)


def pack_neighbors(neighbors: Sequence[Neighbor], n_states: int) -> tuple[np.ndarray, np.ndarray]:
    nb_xy = np.zeros((len(neighbors), n_states, 2))
    nb_par = np.zeros((len(neighbors), 4))
    for j, (traj, rp) in enumerate(neighbors):
        if len(traj) != n_states:
            raise ValueError(f"neighbour trajectory has {len(traj)} states, expected {n_states}")
        nb_xy[j] = traj.states[:, :2]
        nb_par[j] = rp.as_array()
    return nb_xy, nb_par


def cost_ca(traj_i: Trajectory, neighbors: Sequence[Neighbor]) -> float:
    total = 0.0
    for traj_j, rp in neighbors:
        if len(traj_j) != len(traj_i):
            raise ValueError("trajectory length mismatch")
        d = traj_i.states[:, :2] - traj_j.states[:, :2]
        k = np.arange(1, len(traj_i) + 1)
        r = rp.K_ca / np.sqrt(1.0 + rp.K_d * k) * np.exp(-d[:, 0] ** 2 / rp.alpha_x - d[:, 1] ** 2 / rp.alpha_y)
        total += float(r.sum())
    return total


def _offset_changes(seq: ControlSequence, u_prev: ControlAction) -> np.ndarray:
    return np.diff(seq.u[:, 0], prepend=u_prev.u_y)


def cost_effort(seq: ControlSequence, u_prev: ControlAction, w: CostWeights) -> float:
    du = _offset_changes(seq, u_prev)
    return float(np.sum(w.K_y * du**2 + w.K_s * (1.0 - seq.u[:, 1]) ** 2))


def cost_behavior(seq: ControlSequence, u_prev: ControlAction, w: CostWeights) -> float:
    # positive y is port, so an increase of the offset command is a port-ward move
    du = _offset_changes(seq, u_prev)
    return float(np.sum(
        w.mu1 * b1(1.0 - seq.u[:, 1], w.gamma_s)
        + w.mu2 * b1(du, w.gamma_y)
        + b2(du, w.b2_r1, w.b2_r2)
    ))


def total_cost(traj: Trajectory, seq: ControlSequence, u_prev: ControlAction,
               neighbors: Sequence[Neighbor], w: CostWeights) -> float:
    return cost_ca(traj, neighbors) + cost_effort(seq, u_prev, w) + cost_behavior(seq, u_prev, w)


def total_cost_gradient(seq: ControlSequence, p0, params: VesselParams, u_prev: ControlAction,
                        neighbors: Sequence[Neighbor], w: CostWeights, method: str = "adjoint") -> np.ndarray:
    """Gradient of :func:`total_cost` of ``rollout(p0, seq)`` w.r.t. the inputs.

    ``method="adjoint"`` uses the compiled reverse sweep; ``"jacobian"``
    chains the explicit state Jacobian with the per-state risk gradient.
    Both return an ``(N, 2)`` array.
    """
    n = len(seq)
    u = np.ascontiguousarray(seq.u)
    nb_xy, nb_par = pack_neighbors(neighbors, n + 1)
    up = np.array([u_prev.u_y, u_prev.u_s])
    if method == "adjoint":
        zeros = np.zeros((n + 1, 3))
        p0a = p0.as_array() if hasattr(p0, "as_array") else np.asarray(p0, float)
        _, g = kernels.objective_gradient(u, p0a, params.as_array(), up, nb_xy, nb_par,
                                          w.as_array(), zeros, zeros, 0.0)
        return g
    if method != "jacobian":
        raise ValueError(f"unknown method {method!r}")

    traj = rollout(p0, seq, params)
    jac = rollout_jacobian(p0, seq, params)
    ds = np.zeros((n + 1, 3))
    k = np.arange(1, n + 2)
    for traj_j, rp in neighbors:
        d = traj.states[:, :2] - traj_j.states[:, :2]
        r = rp.K_ca / np.sqrt(1.0 + rp.K_d * k) * np.exp(-d[:, 0] ** 2 / rp.alpha_x - d[:, 1] ** 2 / rp.alpha_y)
        ds[:, 0] -= 2.0 * d[:, 0] / rp.alpha_x * r
        ds[:, 1] -= 2.0 * d[:, 1] / rp.alpha_y * r
    g = np.einsum("kc,kcim->im", ds, jac)

    du = np.diff(u[:, 0], prepend=u_prev.u_y)
    th = np.tanh(du + w.b2_r2)
    d_du = (2.0 * w.K_y * du + w.mu2 * 2.0 * du / w.gamma_y * np.exp(-du**2 / w.gamma_y)
            + w.b2_r1 * ((th + 1.0) + du * (1.0 - th**2)))
    g[:, 0] += d_du
    g[:-1, 0] -= d_du[1:]
    e = 1.0 - u[:, 1]
    g[:, 1] -= 2.0 * w.K_s * e + w.mu1 * 2.0 * e / w.gamma_s * np.exp(-e**2 / w.gamma_s)
    return g
