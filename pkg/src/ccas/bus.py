"""Synchronous, lossless, fully connected message bus.

Messages sent during a slot are held back and become visible to every other
ship together at the slot boundary, ordered by ``(slot, sender)``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, TextIO, Union

import numpy as np

from ccas.frames import InertialState


@dataclass(frozen=True)
class IntentBroadcast:
    xi: np.ndarray


@dataclass(frozen=True)
class DecisionDone:
    pass


@dataclass(frozen=True)
class PositionReport:
    eta: InertialState
    speed: float


@dataclass(frozen=True)
class WeightExchange:
    weight: float


Payload = Union[IntentBroadcast, DecisionDone, PositionReport, WeightExchange]


@dataclass(frozen=True)
class Message:
    sender: int
    slot: int
    payload: Payload

    @property
    def type(self) -> str:
        return type(self.payload).__name__

    def digest(self) -> str:
        p = self.payload
        if isinstance(p, IntentBroadcast):
            raw = np.ascontiguousarray(p.xi, dtype="<f8").tobytes()
        elif isinstance(p, PositionReport):
            raw = np.array([*p.eta.as_array(), p.speed], dtype="<f8").tobytes()
        elif isinstance(p, WeightExchange):
            raw = np.array([p.weight], dtype="<f8").tobytes()
        else:
            raw = b""
        return hashlib.sha256(self.type.encode() + raw).hexdigest()[:16]


@dataclass
class Bus:
    ship_ids: tuple[int, ...]
    slot: int = 0
    trace: list[Message] = field(default_factory=list)
    _pending: list[Message] = field(default_factory=list, repr=False)
    _last_slot: dict[int, int] = field(default_factory=dict, repr=False)
    sent: int = 0
    delivered: int = 0

    def __post_init__(self):
        self.ship_ids = tuple(sorted(self.ship_ids))
        if len(set(self.ship_ids)) != len(self.ship_ids):
            raise ValueError("duplicate ship ids")

    def broadcast(self, sender: int, payload: Payload) -> Message:
        if sender not in self.ship_ids:
            raise KeyError(f"unknown sender {sender}")
        msg = Message(sender, self.slot, payload)
        self._pending.append(msg)
        self._last_slot[sender] = self.slot
        self.sent += 1
        return msg

    def advance_slot(self) -> dict[int, list[Message]]:
        """Close the current slot and deliver its messages to every ship
        except the sender."""
        batch = sorted(self._pending, key=lambda m: (m.slot, m.sender))
        self._pending = []
        inbox = {i: [m for m in batch if m.sender != i] for i in self.ship_ids}
        self.delivered += sum(len(v) for v in inbox.values())
        self.trace.extend(batch)
        self.slot += 1
        return inbox

    def dump_trace(self, fh: TextIO, messages: Iterable[Message] | None = None) -> None:
        for m in (self.trace if messages is None else messages):
            rec = {"slot": m.slot, "sender": m.sender, "type": m.type, "payload_digest": m.digest()}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
