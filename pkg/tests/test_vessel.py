import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ccas.frames import PathState
from ccas.vessel import ControlAction, ControlSequence, InputBox, VesselParams, rollout, rollout_jacobian, step

P = VesselParams()


def test_straight_line_equilibrium():
    assert step(PathState(0, 0, 0), ControlAction(0, 1.0), P).as_array() == pytest.approx([4, 0, 0])


def test_speed_scaling():
    assert step(PathState(0, 0, 0), ControlAction(0, 0.5), P).as_array() == pytest.approx([2, 0, 0])


def test_one_step_turn():
    nxt = step(PathState(0, 0, 0), ControlAction(10, 1.0), P)
    chi = 0.1 * 0.3 * math.tanh(0.5)
    assert nxt.chi == pytest.approx(chi, abs=1e-15)
    assert nxt.x == pytest.approx(4 * math.cos(chi), abs=1e-15)
    assert nxt.y == pytest.approx(4 * math.sin(chi), abs=1e-15)


def test_rollout_straight_line():
    traj = rollout(PathState(0, 0, 0), ControlSequence.constant(ControlAction(0, 1), 10), P)
    assert traj.states[:, 0] == pytest.approx(4.0 * np.arange(11))
    assert np.all(traj.states[:, 1:] == 0)


def test_rollout_n1_is_step():
    p0 = PathState(1, -2, 0.05)
    u = ControlAction(7, 0.8)
    traj = rollout(p0, ControlSequence.from_actions([u]), P)
    assert traj.states[1] == pytest.approx(step(p0, u, P).as_array(), abs=1e-14)


def test_rollout_matches_sequential_steps():
    rng = np.random.default_rng(3)
    u = np.column_stack([rng.uniform(-30, 30, 20), rng.uniform(0.1, 1, 20)])
    p = PathState(0, 5, -0.1)
    traj = rollout(p, ControlSequence(u), P)
    for k in range(20):
        p = step(p, ControlAction(*u[k]), P)
        assert traj.states[k + 1] == pytest.approx(p.as_array(), abs=1e-10)


def test_jacobian_equilibrium_entry():
    jac = rollout_jacobian(np.zeros(3), ControlSequence.constant(ControlAction(0, 1), 5), P)
    assert jac[1, 0, 0, 1] == pytest.approx(4.0)


def test_jacobian_causality():
    rng = np.random.default_rng(1)
    u = np.column_stack([rng.uniform(-20, 20, 8), rng.uniform(0.2, 1, 8)])
    jac = rollout_jacobian(np.array([0, 1.0, 0.02]), u, P)
    for k in range(9):
        assert np.all(jac[k, :, k:, :] == 0)


def test_jacobian_finite_differences():
    rng = np.random.default_rng(0)
    u = np.column_stack([rng.uniform(-20, 20, 5), rng.uniform(0.2, 0.9, 5)])
    p0 = np.array([0, 3.0, 0.05])
    jac = rollout_jacobian(p0, u, P)
    fd = np.zeros_like(jac)
    for i in range(5):
        for m in range(2):
            h = 1e-6 * max(1.0, abs(u[i, m]))
            up, dn = u.copy(), u.copy()
            up[i, m] += h
            dn[i, m] -= h
            fd[:, :, i, m] = (rollout(p0, up, P).states - rollout(p0, dn, P).states) / (2 * h)
    err = np.max(np.abs(jac - fd)) / np.max(np.abs(fd))
    assert err < 1e-6


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_course_bounded_by_chi_max(seed):
    rng = np.random.default_rng(seed)
    box = InputBox.for_lane(-60, 60, 8.6)
    u = np.column_stack([rng.uniform(box.y_min, box.y_max, 40), rng.uniform(0.1, 1, 40)])
    traj = rollout(np.array([0, rng.uniform(-50, 50), rng.uniform(-0.3, 0.3)]), u, P)
    assert np.max(np.abs(traj.states[:, 2])) <= P.chi_max + 1e-12


def test_params_validation():
    with pytest.raises(ValueError):
        VesselParams(chi_max=2.0)
    with pytest.raises(ValueError):
        VesselParams(T1=0.0)
    with pytest.raises(ValueError):
        InputBox.for_lane(-5, 5, 10)


def test_box_clip_and_contains():
    box = InputBox(-10, 10, 0.1, 1.0)
    u = np.array([[-20, 2.0], [5, 0.0]])
    c = box.clip(u)
    assert box.contains(c)
    assert not box.contains(u)
    assert c.tolist() == [[-10, 1.0], [5, 0.1]]


def test_shifted_repeats_last():
    seq = ControlSequence(np.array([[1, 1.0], [2, 0.5], [3, 0.2]]))
    assert seq.shifted().u.tolist() == [[2, 0.5], [3, 0.2], [3, 0.2]]
