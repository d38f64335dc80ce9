import os
import subprocess
import sys

import numpy as np
import pytest

from ccas import kernels

VP = np.array([4.0, 1.0, 10.0, 0.05, 0.3])


def _inputs(seed, n=25, m=3):
    rng = np.random.default_rng(seed)
    u = np.column_stack([rng.uniform(-60, 60, n), rng.uniform(0.1, 1.0, n)])
    p0 = np.array([rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-0.3, 0.3)])
    nb_xy = rng.uniform(-300, 300, (m, n + 1, 2))
    nb_par = np.tile([10.0, 5.0, 120.0**2, 20.0**2], (m, 1))
    w = np.array([1e-2, 2e-2, 1.0, 1.0, 0.1, 2.0 - np.pi, 0.01, 1.0])
    return u, p0, nb_xy, nb_par, w, rng.normal(size=(n + 1, 3)) * 50, rng.normal(size=(n + 1, 3)) * 1e-3


@pytest.mark.parametrize("seed", range(5))
def test_kernels_agree(seed):
    u, p0, nb_xy, nb_par, w, target, z = _inputs(seed)
    L, N = kernels.LOOP_KERNELS, kernels.NUMPY_KERNELS
    assert L["rollout"](p0, u, VP) == pytest.approx(N["rollout"](p0, u, VP), rel=1e-12, abs=1e-9)
    assert L["rollout_jacobian"](p0, u, VP) == pytest.approx(N["rollout_jacobian"](p0, u, VP), rel=1e-12,
                                                              abs=1e-12)
    args = (u, p0, VP, np.array([5.0, 0.8]), nb_xy, nb_par, w, target, z, 3e-4)
    fa, ga = L["objective_gradient"](*args)
    fb, gb = N["objective_gradient"](*args)
    assert fa == pytest.approx(fb, rel=1e-12)
    assert ga == pytest.approx(gb, rel=1e-10, abs=1e-12)


def test_lbfgs_direction_agree():
    rng = np.random.default_rng(1)
    n, m = 40, 5
    g = rng.normal(size=n)
    s, y = rng.normal(size=(m, n)), rng.normal(size=(m, n))
    y += 2 * s  # keep curvature positive on most pairs
    order = np.array([2, 3, 4, 0, 1])
    free = rng.random(n) > 0.2
    a = kernels.LOOP_KERNELS["lbfgs_direction"](g, s, y, order, free)
    b = kernels.NUMPY_KERNELS["lbfgs_direction"](g, s, y, order, free)
    assert a == pytest.approx(b, rel=1e-10, abs=1e-12)
    assert np.all(a[~free] == 0)
    # no history: steepest descent on the free set
    d = kernels.NUMPY_KERNELS["lbfgs_direction"](g, s[:0], y[:0], order[:0], free)
    assert np.array_equal(d, -np.where(free, g, 0.0))


def _backend(flag):
    env = dict(os.environ, CCAS_DISABLE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", "from ccas import kernels; print(kernels.BACKEND)"], env=env,
                         capture_output=True, text=True, check=True)
    return out.stdout.strip()


def test_env_flag_selects_numpy():
    assert _backend("1") == "numpy"
    assert _backend("0") in ("numba", "numpy")
