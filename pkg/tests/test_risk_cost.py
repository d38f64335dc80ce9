import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ccas import kernels
from ccas.risk_cost import (CostWeights, RiskParams, b1, b2, collision_risk, cost_behavior, cost_ca, cost_effort,
                            total_cost, total_cost_gradient)
from ccas.vessel import ControlAction, ControlSequence, Trajectory, VesselParams, rollout

RP = RiskParams()
W = CostWeights()
P = VesselParams()
U0 = ControlAction(0.0, 1.0)


def _line(n, x0=0.0, y=0.0, v=0.0):
    return Trajectory(np.column_stack([x0 + v * np.arange(n + 1), np.full(n + 1, y), np.zeros(n + 1)]))


def test_risk_examples():
    assert collision_risk(0, 0, 0, RP) == RP.K_ca
    assert collision_risk(0, 0, 1, RP) == pytest.approx(RP.K_ca / math.sqrt(6))
    with pytest.raises(ValueError):
        collision_risk(0, 0, -1, RP)


@given(st.floats(0, 500), st.floats(0.01, 50), st.floats(0, 100), st.integers(0, 40))
def test_risk_monotone(dx, step_, dy, k):
    r = collision_risk(dx, dy, k, RP)
    assert r > 0 or dx > 500 or dy > 90
    assert collision_risk(dx + step_, dy, k, RP) <= r
    assert collision_risk(dx, dy + step_, k, RP) <= r
    assert collision_risk(dx, dy, k + 1, RP) < r or r == 0


def test_risk_asymmetric_when_shapes_differ():
    small = RiskParams(alpha_x=60.0**2, alpha_y=10.0**2)
    assert collision_risk(50, 5, 1, RP) != collision_risk(-50, -5, 1, small)


def test_b1_b2_examples():
    assert b1(0.0, 1.0) == 0
    assert b1(2.5, 1.0) == b1(-2.5, 1.0)
    assert b1(3.0, 1.0) == pytest.approx(1 - math.exp(-9))
    assert b2(0.0, 0.1, 2 - math.pi) == 0
    assert b2(50.0, 0.1, 2 - math.pi) == pytest.approx(2 * 0.1 * 50, rel=1e-9)
    assert abs(b2(-5.0, 0.1, 2 - math.pi)) < 1e-3


def test_cost_ca_examples():
    n = 10
    assert cost_ca(_line(n), []) == 0
    assert cost_ca(_line(n), [(_line(n, 1e6), RP)]) == pytest.approx(0, abs=1e-300)
    flat = RiskParams(K_d=0.0)
    assert cost_ca(_line(n), [(_line(n), flat)]) == pytest.approx((n + 1) * flat.K_ca)
    with pytest.raises(ValueError):
        cost_ca(_line(n), [(_line(n + 1), RP)])


def test_cost_effort_examples():
    n = 12
    assert cost_effort(ControlSequence.constant(ControlAction(3, 1), n), ControlAction(3, 1), W) == 0
    half = ControlSequence.constant(ControlAction(0, 0.5), n)
    assert cost_effort(half, U0, W) == pytest.approx(n * 2e-2 * 0.25)
    seq = ControlSequence(np.column_stack([np.linspace(0, 20, n), np.ones(n)]))
    w2 = CostWeights(K_y=2 * W.K_y)
    assert cost_effort(seq, U0, w2) == pytest.approx(2 * cost_effort(seq, U0, W))


def test_cost_behavior_examples():
    n = 8
    assert cost_behavior(ControlSequence.constant(ControlAction(4, 1), n), ControlAction(4, 1), W) == 0
    # one large starboard jump (offset decreases under the port-positive convention)
    stbd = ControlSequence.constant(ControlAction(-30, 1), n)
    assert cost_behavior(stbd, U0, W) == pytest.approx(W.mu2, abs=2e-3)
    port = ControlSequence.constant(ControlAction(30, 1), n)
    extra = cost_behavior(port, U0, W) - W.mu2
    assert extra == pytest.approx(float(b2(30.0, W.b2_r1, W.b2_r2)), rel=1e-9)
    assert extra > 0
    bigger = ControlSequence.constant(ControlAction(60, 1), n)
    assert cost_behavior(bigger, U0, W) - W.mu2 > extra


def test_total_cost_is_sum_and_nonnegative():
    rng = np.random.default_rng(5)
    n = 10
    seq = ControlSequence(np.column_stack([rng.uniform(-20, 20, n), rng.uniform(0.2, 1, n)]))
    traj = rollout(np.zeros(3), seq, P)
    nb = [(_line(n, 200, 3, -4), RP)]
    parts = cost_ca(traj, nb), cost_effort(seq, U0, W), cost_behavior(seq, U0, W)
    assert min(parts) >= 0
    assert total_cost(traj, seq, U0, nb, W) == pytest.approx(sum(parts))
    eq = ControlSequence.constant(U0, n)
    assert total_cost(rollout(np.zeros(3), eq, P), eq, U0, [], W) == 0


def test_gradient_at_equilibrium():
    n = 10
    eq = ControlSequence.constant(U0, n)
    no_b2 = CostWeights(b2_r1=0.0)
    assert np.all(total_cost_gradient(eq, np.zeros(3), P, U0, [], no_b2)[:, 0] == 0)
    # B2 has slope r1 (tanh(r2) + 1) at zero; the differences telescope onto the last offset
    g = total_cost_gradient(eq, np.zeros(3), P, U0, [], W)
    assert np.all(g[:-1, 0] == 0)
    assert g[-1, 0] == pytest.approx(W.b2_r1 * (math.tanh(W.b2_r2) + 1))


def test_speed_term_gradient():
    n = 6
    w = CostWeights(mu1=0.0)
    seq = ControlSequence.constant(ControlAction(0, 0.7), n)
    g = total_cost_gradient(seq, np.zeros(3), P, ControlAction(0, 0.7), [], w)
    assert g[:, 1] == pytest.approx(np.full(n, -2 * w.K_s * 0.3))


@pytest.mark.parametrize("method", ["adjoint", "jacobian"])
def test_gradient_finite_differences(method):
    rng = np.random.default_rng(11)
    n = 10
    nb = [(_line(n, 150, 4, -4), RP), (_line(n, -80, -12, 3), RiskParams(alpha_x=80.0**2))]
    p0 = np.array([0, 2.0, 0.03])
    up = ControlAction(1.5, 0.9)
    for _ in range(10):
        u = np.column_stack([rng.uniform(-15, 15, n), rng.uniform(0.3, 0.95, n)])
        g = total_cost_gradient(ControlSequence(u), p0, P, up, nb, W, method=method)

        def f(v):
            s = ControlSequence(v)
            return total_cost(rollout(p0, s, P), s, up, nb, W)

        fd = np.zeros_like(u)
        for i in range(n):
            for m in range(2):
                h = 1e-5 * max(1.0, abs(u[i, m]))
                a, b = u.copy(), u.copy()
                a[i, m] += h
                b[i, m] -= h
                fd[i, m] = (f(a) - f(b)) / (2 * h)
        assert np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-12) < 1e-5


def test_gradient_methods_agree():
    rng = np.random.default_rng(2)
    n = 15
    u = np.column_stack([rng.uniform(-15, 15, n), rng.uniform(0.3, 0.95, n)])
    nb = [(_line(n, 100, 0, -4), RP)]
    a = total_cost_gradient(ControlSequence(u), np.zeros(3), P, U0, nb, W, method="adjoint")
    b = total_cost_gradient(ControlSequence(u), np.zeros(3), P, U0, nb, W, method="jacobian")
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)
    with pytest.raises(ValueError):
        total_cost_gradient(ControlSequence(u), np.zeros(3), P, U0, nb, W, method="magic")


def test_smooth_fuzz():
    """No NaN or Inf anywhere in the box: the elementwise terms over 1e6
    samples and the full objective with gradient over 2e4 sampled horizons."""
    rng = np.random.default_rng(0)
    m = 1_000_000
    dx, dy = rng.uniform(-1e4, 1e4, m), rng.uniform(-1e4, 1e4, m)
    k = rng.integers(0, 41, m)
    r = RP.K_ca / np.sqrt(1 + RP.K_d * k) * np.exp(-dx**2 / RP.alpha_x - dy**2 / RP.alpha_y)
    du = rng.uniform(-120, 120, m)
    us = rng.uniform(0.1, 1.0, m)
    vals = np.concatenate([r, b1(du, W.gamma_y), b2(du, W.b2_r1, W.b2_r2), b1(1 - us, W.gamma_s)])
    assert np.all(np.isfinite(vals))

    n = 10
    vp, wv = P.as_array(), W.as_array()
    nb_xy = rng.uniform(-300, 300, (2, n + 1, 2))
    nb_par = np.tile(RP.as_array(), (2, 1))
    zeros = np.zeros((n + 1, 3))
    for _ in range(20_000):
        u = np.column_stack([rng.uniform(-60, 60, n), rng.uniform(0.1, 1.0, n)])
        f, g = kernels.objective_gradient(u, np.zeros(3), vp, np.array([0.0, 1.0]), nb_xy, nb_par, wv,
                                          zeros, zeros, 0.0)
        assert math.isfinite(f) and np.all(np.isfinite(g))


def test_weight_validation():
    with pytest.raises(ValueError):
        CostWeights(gamma_y=0.0)
    with pytest.raises(ValueError):
        CostWeights(K_y=-1.0)
    with pytest.raises(ValueError):
        RiskParams(alpha_x=0.0)
