"""Per-ship augmented-Lagrangian subproblem solved by single shooting.

States are eliminated by rolling the kinematics forward from the current
state, which leaves the input box as the only constraint. The resulting
problem is solved with a projected limited-memory quasi-Newton method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ccas import kernels
from ccas.frames import PathState
from ccas.risk_cost import CostWeights, Neighbor, pack_neighbors
from ccas.vessel import (ControlAction, ControlSequence, InputBox, Trajectory, VesselParams, rollout)


class SolverError(RuntimeError):
    pass


@dataclass
class LocalProblem:
    p_init: PathState
    u_prev: ControlAction
    neighbors: Sequence[Neighbor]
    consensus_target: Trajectory
    z: np.ndarray
    beta: float
    box: InputBox
    weights: CostWeights = field(default_factory=CostWeights)
    params: VesselParams = field(default_factory=VesselParams)

    def __post_init__(self):
        n1 = len(self.consensus_target)
        self.z = np.asarray(self.z, dtype=float).reshape(n1, 3)
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        self._nb_xy, self._nb_par = pack_neighbors(self.neighbors, n1)
        self._p0 = (self.p_init.as_array() if isinstance(self.p_init, PathState)
                    else np.asarray(self.p_init, dtype=float))
        self._vp = self.params.as_array()
        self._w = self.weights.as_array()
        self._up = np.array([self.u_prev.u_y, self.u_prev.u_s])
        self._target = np.ascontiguousarray(self.consensus_target.states)

    @property
    def horizon(self) -> int:
        return len(self.consensus_target) - 1

    def evaluate(self, u: np.ndarray) -> tuple[float, np.ndarray]:
        """Objective and gradient for an ``(N, 2)`` input array."""
        if u.shape != (self.horizon, 2):
            raise ValueError(f"expected inputs of shape {(self.horizon, 2)}, got {u.shape}")
        return kernels.objective_gradient(np.ascontiguousarray(u), self._p0, self._vp, self._up,
                                          self._nb_xy, self._nb_par, self._w, self._target,
                                          self.z, float(self.beta))


@dataclass
class SolveReport:
    useq: ControlSequence
    traj: Trajectory
    objective: float
    grad_norm: float
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list, repr=False)


def augmented_objective(prob: LocalProblem, useq: ControlSequence) -> float:
    return float(prob.evaluate(useq.u)[0])


def projected_gradient(x: np.ndarray, g: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return x - np.clip(x - g, lo, hi)


def solve_local(prob: LocalProblem, warm_start: ControlSequence, tol_g: float = 1e-6,
                max_inner_iters: int = 200, memory: int = 20, offset_scale: float = 30.0,
                alternatives: Sequence[ControlSequence] = ()) -> SolveReport:
    """Solve from ``warm_start`` and from each of ``alternatives``; return the
    result with the lowest objective (the earliest start wins ties).

    The behaviour terms make "no manoeuvre" a local minimum on purpose, so a
    descent method started there cannot find a decisive manoeuvre on its own.
    Alternative starts let the caller offer such manoeuvres explicitly.
    """
    best = _solve_from(prob, warm_start, tol_g, max_inner_iters, memory, offset_scale)
    for alt in alternatives:
        rep = _solve_from(prob, alt, tol_g, max_inner_iters, memory, offset_scale)
        if rep.objective < best.objective:
            best = rep
    return best


def _solve_from(prob: LocalProblem, warm_start: ControlSequence, tol_g: float, max_inner_iters: int,
                memory: int, offset_scale: float) -> SolveReport:
    """Projected L-BFGS on the input box.

    The iteration runs on scaled variables (offsets divided by
    ``offset_scale``), which balances the weak offset sensitivity against
    the stiff speed terms. Convergence is tested on the projected gradient
    in the original variables.
    """
    n = prob.horizon
    lo2, hi2 = prob.box.bounds(n)
    scale = np.tile([offset_scale, 1.0], n)
    lo_u, hi_u = lo2.ravel(), hi2.ravel()
    lo, hi = lo_u / scale, hi_u / scale
    shape = (n, 2)

    def fg(v):
        f, g = prob.evaluate((v * scale).reshape(shape))
        return f, g.ravel() * scale

    def pg_norm_of(v, g):
        return float(np.linalg.norm(projected_gradient(v * scale, g / scale, lo_u, hi_u)))

    x = np.clip(np.array(warm_start.u, dtype=float).ravel(), lo_u, hi_u) / scale
    f, g = fg(x)
    if not (math.isfinite(f) and np.all(np.isfinite(g))):
        raise SolverError("non-finite objective at the warm start")

    dim = x.size
    s_hist = np.zeros((memory, dim))
    y_hist = np.zeros((memory, dim))
    stored: list[int] = []
    head = 0
    history = [f]
    pg_norm = pg_norm_of(x, g)
    it = 0
    while it < max_inner_iters:
        if pg_norm < tol_g:
            break
        it += 1
        free = ~(((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0)))
        order = np.array(stored, dtype=np.int64)
        d = kernels.lbfgs_direction(g, s_hist, y_hist, order, free)
        gd = float(g @ d)
        if not gd < 0:
            stored.clear()
            d = np.where(free, -g, 0.0)
            gd = float(g @ d)
        if stored:
            t = 1.0
        else:
            t = min(1.0, 1.0 / max(float(np.max(np.abs(d))), 1e-12))
        accepted = False
        for _ in range(50):
            xn = np.clip(x + t * d, lo, hi)
            fn, gn = fg(xn)
            if math.isfinite(fn) and fn <= f + 1e-4 * float(g @ (xn - x)) and fn <= f:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            if stored:
                stored.clear()
                continue
            break
        s = xn - x
        y = gn - g
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)) and sy > 0:
            s_hist[head] = s
            y_hist[head] = y
            if head in stored:
                stored.remove(head)
            stored.append(head)
            head = (head + 1) % memory
        stalled = f - fn <= 1e-15 * max(1.0, abs(f)) and float(np.max(np.abs(s))) < 1e-14
        x, f, g = xn, fn, gn
        history.append(f)
        pg_norm = pg_norm_of(x, g)
        if stalled:
            break

    useq = ControlSequence(np.clip((x * scale).reshape(shape), lo2, hi2))
    f, g = prob.evaluate(useq.u)
    pg_norm = float(np.linalg.norm(projected_gradient(useq.u.ravel(), g.ravel(), lo_u, hi_u)))
    converged = pg_norm < tol_g
    traj = rollout(prob._p0, useq, prob.params)
    return SolveReport(useq, traj, float(f), pg_norm, it, converged, history)
