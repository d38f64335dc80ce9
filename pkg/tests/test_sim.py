import csv
import math

import numpy as np
import pytest

from ccas.scenario import load_scenario, parse_scenario
from ccas.sim import (CSV_COLUMNS, SimLog, deadlock_events, log_to_dict, min_x_distance, min_y_distance,
                      passage_time, read_log, replay, run, safety_index, summary, write_log)

ONE_SHIP = {
    "schema_version": 1,
    "total_steps": 12,
    "waterways": [{"id": "w", "centerline": [[-100, 0], [2000, 0]], "half_width": 25}],
    "ships": [{"id": 7, "route": [[0, 0], [1500, 0]], "waterway": "w"}],
}


@pytest.fixture(scope="module")
def short_ho():
    cfg = load_scenario("ho-2").with_overrides(total_steps=15)
    return cfg, run(cfg)


def _log(states, courses, dt=1.0):
    states = np.asarray(states, float)
    t, m = states.shape[0] - 1, states.shape[1]
    return SimLog("synthetic", tuple(range(1, m + 1)), dt, states, np.asarray(courses, float),
                  np.zeros((t + 1, m), int), np.zeros((t, m, 2)), np.full((t, m), math.inf), np.zeros((t, m)),
                  np.zeros((t, m), int), np.zeros((t, m, m)), [[""] * m for _ in range(t)])


def test_safety_index_examples():
    ahead = np.array([[0, 0, 0], [100, 0, math.pi]])
    assert safety_index(0, ahead, 0.0) == pytest.approx(48.5)
    abeam = np.array([[0, 0, 0], [0, 20, 0]])
    assert safety_index(0, abeam, 0.0) == pytest.approx(11.4)
    overlap = np.array([[0, 0, 0], [10, 0, 0]])
    assert safety_index(0, overlap, 0.0) == pytest.approx(-8.6)
    # measured in ship 0's path frame
    assert safety_index(0, np.array([[0, 0, 0], [0, 100, 0]]), math.pi / 2) == pytest.approx(48.5)
    assert safety_index(0, ahead[:1], 0.0) == math.inf


def test_single_ship_straight_line():
    log = run(parse_scenario(ONE_SHIP))
    assert log.states[:, 0, 0] == pytest.approx(4.0 * np.arange(13), abs=0.05)
    assert np.max(np.abs(log.states[:, 0, 1])) < 0.5
    assert np.all(np.isinf(log.epsilon))
    assert np.all(log.inputs[:, 0, 1] == 1.0)


def test_min_distances_and_passage():
    # ship 2 overtakes nothing: it runs west along y = 10 while ship 1 runs east along y = 0
    t = np.arange(6)
    s1 = np.column_stack([4.0 * t, np.zeros(6), np.zeros(6)])
    s2 = np.column_stack([30 - 4.0 * t, np.full(6, 10.0), np.full(6, math.pi)])
    log = _log(np.stack([s1, s2], axis=1), np.tile([0.0, math.pi], (6, 1)))
    # offsets along ship 1's track over steps 0..4: 30, 22, 14, 6, -2
    assert min_x_distance(log, (1, 2)) == pytest.approx(2.0)
    assert min_x_distance(log, (1, 2), max_lateral=5.0) == math.inf
    assert min_y_distance(log, (1, 2)) == pytest.approx(10.0)
    assert passage_time(log, 1, (10.0, 0.0)) == pytest.approx(2.5)
    assert passage_time(log, 1, (500.0, 0.0)) == math.inf
    assert passage_time(log, 1, (-5.0, 0.0)) == 0.0
    assert deadlock_events(log) == 0


def test_short_run_is_deterministic(short_ho):
    cfg, log = short_ho
    again = run(cfg)
    for name in ("states", "inputs", "epsilon", "residual", "rank"):
        assert np.array_equal(getattr(log, name), getattr(again, name))
    assert log.events == again.events
    assert log.config_digest == cfg.digest()


def test_replay_matches(short_ho):
    cfg, log = short_ho
    assert replay(log, cfg) < 1e-9


def test_write_log_formats(short_ho, tmp_path):
    cfg, log = short_ho
    with pytest.raises(ValueError, match="extension"):
        write_log(log, tmp_path / "noext")
    with pytest.raises(ValueError, match="format"):
        write_log(log, tmp_path / "x.txt")

    p = write_log(log, tmp_path / "sub" / "run.csv")
    rows = list(csv.reader(p.open()))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) - 1 == log.n_steps * len(log.ship_ids)
    assert [int(r[2]) for r in rows[1:3]] == [1, 2]

    j = write_log(log, tmp_path / "run.json")
    back = read_log(j)
    assert log_to_dict(back) == log_to_dict(log)
    assert summary(back) == summary(log)
    first = j.read_bytes()
    write_log(back, j)
    assert j.read_bytes() == first


def test_truncated(short_ho):
    _, log = short_ho
    t = log.truncated(5)
    assert t.n_steps == 5 and len(t.states) == 6
    assert np.array_equal(t.states, log.states[:6])
