"""Compare the numba-compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--horizon 40] [--neighbors 3] [--repeat 5]

Part one times each kernel pair in-process on identical inputs and checks
that they agree. Part two times one local MPC solve end to end in two
subprocesses, with and without ``CCAS_DISABLE_NUMBA``.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from ccas import kernels
from ccas._accel import HAS_NUMBA

SOLVE_SNIPPET = """
import time, numpy as np
from ccas import kernels
from ccas.local_ocp import LocalProblem, solve_local
from ccas.vessel import ControlAction, ControlSequence, InputBox, Trajectory, VesselParams, rollout
from ccas.risk_cost import RiskParams
N = {n}
nb = []
for j in range({m}):
    xs = 300.0 + 40 * j - 4.0 * np.arange(N + 1)
    nb.append((Trajectory(np.column_stack([xs, np.full(N + 1, 5.0 * j), np.full(N + 1, np.pi)])), RiskParams()))
seq = ControlSequence.constant(ControlAction(0.0, 1.0), N)
target = rollout(np.zeros(3), seq, VesselParams()).states
prob = LocalProblem(np.zeros(3), ControlAction(0.0, 1.0), nb, Trajectory(target), np.zeros((N + 1, 3)), 3e-4,
                    InputBox.for_lane(-60, 60, 8.6))
solve_local(prob, seq)
t = time.perf_counter()
for _ in range({repeat}):
    rep = solve_local(prob, seq)
print(kernels.BACKEND, (time.perf_counter() - t) / {repeat}, rep.objective)
"""


def make_inputs(n: int, m: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    u = np.column_stack([rng.uniform(-20, 20, n), rng.uniform(0.3, 1.0, n)])
    p0 = np.array([0.0, 2.0, 0.05])
    vp = np.array([4.0, 1.0, 10.0, 0.05, 0.3])
    up = np.array([0.0, 1.0])
    nb_xy = rng.uniform(-200, 200, (m, n + 1, 2))
    nb_par = np.tile([10.0, 5.0, 120.0**2, 20.0**2], (m, 1))
    w = np.array([1e-2, 2e-2, 1.0, 1.0, 0.1, 2.0 - np.pi, 0.01, 1.0])
    target = rng.normal(size=(n + 1, 3))
    z = rng.normal(size=(n + 1, 3)) * 1e-3
    return u, p0, vp, up, nb_xy, nb_par, w, target, z


def bench_kernels(n: int, m: int, repeat: int) -> None:
    u, p0, vp, up, nb_xy, nb_par, w, target, z = make_inputs(n, m)
    cases = {
        "rollout": (p0, u, vp),
        "rollout_jacobian": (p0, u, vp),
        "objective_gradient": (u, p0, vp, up, nb_xy, nb_par, w, target, z, 3e-4),
    }
    print(f"kernels, N={n}, neighbours={m} (numba available: {HAS_NUMBA})")
    print(f"{'kernel':<20} {'loops [us]':>12} {'numpy [us]':>12} {'speedup':>8} {'max diff':>10}")
    for name, args in cases.items():
        fast, ref = kernels.LOOP_KERNELS[name], kernels.NUMPY_KERNELS[name]
        a, b = fast(*args), ref(*args)  # first call compiles
        if isinstance(a, tuple):
            diff = max(float(np.max(np.abs(np.asarray(x) - np.asarray(y)))) for x, y in zip(a, b))
        else:
            diff = float(np.max(np.abs(a - b)))
        loops = min(timeit.repeat(lambda: fast(*args), number=200, repeat=repeat)) / 200
        vect = min(timeit.repeat(lambda: ref(*args), number=200, repeat=repeat)) / 200
        print(f"{name:<20} {loops * 1e6:>12.1f} {vect * 1e6:>12.1f} {vect / loops:>8.1f} {diff:>10.1e}")


def bench_solve(n: int, m: int, repeat: int) -> None:
    code = SOLVE_SNIPPET.format(n=n, m=m, repeat=repeat)
    print(f"\nlocal solve, N={n}, neighbours={m}")
    for flag in ("0", "1"):
        env = dict(os.environ, CCAS_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        backend, secs, obj = out.stdout.split()
        print(f"{backend:<8} {float(secs) * 1e3:>9.1f} ms per solve   objective {float(obj):.6f}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizon", type=int, default=40)
    ap.add_argument("--neighbors", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-solve", action="store_true")
    args = ap.parse_args()
    bench_kernels(args.horizon, args.neighbors, args.repeat)
    if not args.skip_solve:
        bench_solve(args.horizon, args.neighbors, args.repeat)


if __name__ == "__main__":
    main()
