import io
import json

import numpy as np
import pytest

from ccas.bus import Bus, DecisionDone, IntentBroadcast, PositionReport, WeightExchange
from ccas.frames import InertialState


def test_delivery_at_slot_boundary():
    bus = Bus((3, 1, 2))
    assert bus.ship_ids == (1, 2, 3)
    bus.broadcast(2, DecisionDone())
    bus.broadcast(1, WeightExchange(5.0))
    inbox = bus.advance_slot()
    assert [m.sender for m in inbox[3]] == [1, 2]
    assert [m.sender for m in inbox[1]] == [2]
    assert [m.sender for m in inbox[2]] == [1]
    assert bus.slot == 1


def test_nothing_visible_before_boundary():
    bus = Bus((1, 2))
    bus.broadcast(1, DecisionDone())
    assert bus.trace == []
    assert bus.advance_slot()[2][0].slot == 0
    assert bus.advance_slot() == {1: [], 2: []}


def test_lossless_counts():
    bus = Bus((1, 2, 3, 4))
    rng = np.random.default_rng(0)
    for _ in range(20):
        for s in rng.choice([1, 2, 3, 4], size=rng.integers(0, 5)):
            bus.broadcast(int(s), WeightExchange(float(s)))
        bus.advance_slot()
    assert bus.delivered == 3 * bus.sent
    assert len(bus.trace) == bus.sent
    keys = [(m.slot, m.sender) for m in bus.trace]
    assert keys == sorted(keys)


def test_unknown_sender_and_duplicates():
    with pytest.raises(KeyError):
        Bus((1, 2)).broadcast(9, DecisionDone())
    with pytest.raises(ValueError):
        Bus((1, 1))


def test_trace_dump():
    bus = Bus((1, 2))
    bus.broadcast(1, IntentBroadcast(np.zeros((3, 3))))
    bus.broadcast(2, PositionReport(InertialState(1, 2, 0.5), 4.0))
    bus.advance_slot()
    buf = io.StringIO()
    bus.dump_trace(buf)
    lines = [json.loads(x) for x in buf.getvalue().splitlines()]
    assert [(d["slot"], d["sender"], d["type"]) for d in lines] == [
        (0, 1, "IntentBroadcast"), (0, 2, "PositionReport")]
    assert all(len(d["payload_digest"]) == 16 for d in lines)


def test_digest_depends_on_payload():
    bus = Bus((1,))
    a = bus.broadcast(1, IntentBroadcast(np.zeros((2, 3))))
    b = bus.broadcast(1, IntentBroadcast(np.ones((2, 3))))
    c = bus.broadcast(1, IntentBroadcast(np.zeros((2, 3))))
    assert a.digest() != b.digest() and a.digest() == c.digest()
