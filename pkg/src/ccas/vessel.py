"""Setpoint-filter kinematics in the path frame and horizon rollouts.

One step maps ``(x, y, chi)`` and a command ``(u_y, u_s)`` to the next
state. The course is updated first, from the previous cross-track error,
and the position update then uses the new course.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ccas import kernels
from ccas.frames import PathState


@dataclass(frozen=True)
class VesselParams:
    nominal_speed: float = 4.0
    chi_max: float = 0.3
    T1: float = 10.0
    Ke: float = 0.05
    dt: float = 1.0
    weight: float = 1.0e6
    half_length: float = 51.5
    half_width: float = 8.6

    def __post_init__(self):
        for name in ("nominal_speed", "chi_max", "T1", "Ke", "dt", "weight", "half_length", "half_width"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.chi_max < math.pi / 2:
            raise ValueError("chi_max must be below pi/2")

    def as_array(self) -> np.ndarray:
        return np.array([self.nominal_speed, self.dt, self.T1, self.Ke, self.chi_max])


@dataclass(frozen=True)
class ControlAction:
    u_y: float
    u_s: float = 1.0


@dataclass(frozen=True)
class InputBox:
    """The admissible input set: cross-track offset within the lane and a
    bounded speed factor."""

    y_min: float
    y_max: float
    s_min: float = 0.1
    s_max: float = 1.0

    def __post_init__(self):
        if not (self.y_min < self.y_max and self.s_min < self.s_max):
            raise ValueError("empty input box")

    @classmethod
    def for_lane(cls, lane_min: float, lane_max: float, margin: float = 10.0,
                 s_min: float = 0.1, s_max: float = 1.0) -> "InputBox":
        lo, hi = lane_min + margin, lane_max - margin
        if not lo < hi:
            raise ValueError(f"lane [{lane_min}, {lane_max}] too narrow for margin {margin}")
        return cls(lo, hi, s_min, s_max)

    def bounds(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        lo = np.tile([self.y_min, self.s_min], (n, 1))
        hi = np.tile([self.y_max, self.s_max], (n, 1))
        return lo, hi

    def contains(self, u: np.ndarray) -> bool:
        u = np.asarray(u)
        return bool(
            np.all(u[..., 0] >= self.y_min) and np.all(u[..., 0] <= self.y_max)
            and np.all(u[..., 1] >= self.s_min) and np.all(u[..., 1] <= self.s_max)
        )

    def clip(self, u: np.ndarray) -> np.ndarray:
        lo, hi = self.bounds(len(u))
        return np.clip(u, lo, hi)


@dataclass
class ControlSequence:
    """Inputs over the horizon, an ``(N, 2)`` array with columns ``u_y, u_s``."""

    u: np.ndarray

    def __post_init__(self):
        self.u = np.array(self.u, dtype=float).reshape(-1, 2)

    @classmethod
    def from_actions(cls, actions: Sequence[ControlAction]) -> "ControlSequence":
        return cls(np.array([[a.u_y, a.u_s] for a in actions], dtype=float))

    @classmethod
    def constant(cls, action: ControlAction, n: int) -> "ControlSequence":
        return cls(np.tile([action.u_y, action.u_s], (n, 1)))

    @property
    def actions(self) -> list[ControlAction]:
        return [ControlAction(float(a), float(b)) for a, b in self.u]

    def __len__(self) -> int:
        return len(self.u)

    def shifted(self) -> "ControlSequence":
        """Drop the first action and repeat the last one."""
        return ControlSequence(np.vstack([self.u[1:], self.u[-1:]]))


@dataclass
class Trajectory:
    """``N + 1`` path-frame states, an ``(N + 1, 3)`` array."""

    states: np.ndarray

    def __post_init__(self):
        self.states = np.array(self.states, dtype=float).reshape(-1, 3)

    def __len__(self) -> int:
        return len(self.states)

    def __getitem__(self, k: int) -> PathState:
        return PathState(*self.states[k])


def step(p: PathState, u: ControlAction, params: VesselParams) -> PathState:
    a = params.dt / params.T1
    chi = p.chi + a * (params.chi_max * math.tanh(params.Ke * (u.u_y - p.y)) - p.chi)
    v = params.dt * u.u_s * params.nominal_speed
    return PathState(p.x + v * math.cos(chi), p.y + v * math.sin(chi), chi)


def step_array(p: np.ndarray, u: np.ndarray, params: VesselParams) -> np.ndarray:
    """:func:`step` without angle wrapping; used by the plant and replays."""
    a = params.dt / params.T1
    chi = p[2] + a * (params.chi_max * math.tanh(params.Ke * (u[0] - p[1])) - p[2])
    v = params.dt * u[1] * params.nominal_speed
    return np.array([p[0] + v * math.cos(chi), p[1] + v * math.sin(chi), chi])


def _as_p0(p0) -> np.ndarray:
    return p0.as_array() if isinstance(p0, PathState) else np.asarray(p0, dtype=float)


def _as_u(seq) -> np.ndarray:
    return seq.u if isinstance(seq, ControlSequence) else np.asarray(seq, dtype=float).reshape(-1, 2)


def rollout(p0, seq, params: VesselParams) -> Trajectory:
    return Trajectory(kernels.rollout(_as_p0(p0), np.ascontiguousarray(_as_u(seq)), params.as_array()))


def rollout_jacobian(p0, seq, params: VesselParams) -> np.ndarray:
    """Sensitivities ``d state[k, c] / d u[i, m]`` with shape ``(N+1, 3, N, 2)``."""
    return kernels.rollout_jacobian(_as_p0(p0), np.ascontiguousarray(_as_u(seq)), params.as_array())
