"""Discrete-event core: scheduler, link delays, processing costs, node queues.

The processing model has four delay terms per hop: propagation (fixed per
link class, or distance based), a 1 us transmission term, queueing in a
bounded priority queue, and service on one of a small pool of processors.
Service time is physical-layer + logic time plus the crypto work items the
message carries.
"""

from __future__ import annotations

import enum
import heapq
import itertools
from collections import deque
from dataclasses import dataclass, fields
from typing import Any, Callable, Optional

__all__ = [
    "EventKind",
    "Event",
    "Scheduler",
    "MsgClass",
    "Crypto",
    "Message",
    "DelayModel",
    "NodeQueue",
    "Offer",
    "link_delay",
    "service_time",
    "DEFAULT_PRIORITY",
]

SPEED_OF_LIGHT_KM_MS = 299.792458


class EventKind(enum.IntEnum):
    MESSAGE_ARRIVAL = 0
    TIMER_EXPIRY = 1
    PROCESSOR_FREE = 2
    TRIGGER_CHECK = 3


@dataclass(frozen=True, order=True)
class Event:
    fire_time: float
    sequence: int
    kind: EventKind
    target: Any = None
    payload: Any = None


class Scheduler:
    """Min-heap event list ordered by (fire_time, sequence).

    Handlers are registered per :class:`EventKind` and called as
    ``handler(target, payload)``; ``now`` is updated before the call.
    """

    def __init__(self, trace: bool = False):
        self.now = 0.0
        self._heap: list = []
        self._seq = itertools.count()
        self._handlers: list[Optional[Callable]] = [None] * len(EventKind)
        self.trace: Optional[list] = [] if trace else None
        self.fired = 0

    def __len__(self):
        return len(self._heap)

    def on(self, kind: EventKind, handler: Callable) -> None:
        self._handlers[kind] = handler

    def schedule(self, fire_time: float, kind: int, target=None, payload=None) -> int:
        if fire_time < self.now:
            raise ValueError(
                f"cannot schedule into the past ({fire_time} < now={self.now})"
            )
        seq = next(self._seq)
        heapq.heappush(self._heap, (fire_time, seq, kind, target, payload))
        return seq

    def schedule_event(self, event: Event) -> None:
        if event.fire_time < self.now:
            raise ValueError("cannot schedule into the past")
        heapq.heappush(
            self._heap,
            (event.fire_time, event.sequence, event.kind, event.target, event.payload),
        )

    def peek_time(self) -> Optional[float]:
        return self._heap[0][0] if self._heap else None

    def run_until(self, t_end: float) -> None:
        heap = self._heap
        handlers = self._handlers
        trace = self.trace
        pop = heapq.heappop
        n = 0
        while heap and heap[0][0] <= t_end:
            t, seq, kind, target, payload = pop(heap)
            self.now = t
            if trace is not None:
                trace.append((t, seq, int(kind), repr(target)))
            handlers[kind](target, payload)
            n += 1
        self.fired += n
        if t_end > self.now:
            self.now = t_end


class MsgClass(enum.IntEnum):
    UE_REQUEST = 0
    UE_RETRANSMISSION = 1
    SHARE_BROADCAST = 2
    GA_REQUEST = 3
    INTER_SATELLITE = 4
    CORE_RESPONSE = 5
    ATTACH_REQUEST = 6
    CONFIG_DELIVERY = 7
    NOTIFICATION_BROADCAST = 8
    # classes needed to close the loops of the sequence diagram
    CORE_NOTIFY = 9
    ATTACH_RESPONSE = 10
    GA_PROVISION = 11
    GROUP_MONITOR = 12  # satellite-internal job, never crosses a link

    @property
    def label(self) -> str:
        return self.name.lower().replace("_", "-")


# highest first; lower number wins
DEFAULT_PRIORITY = {
    MsgClass.GROUP_MONITOR: 0,
    MsgClass.INTER_SATELLITE: 0,
    MsgClass.CORE_RESPONSE: 1,
    MsgClass.CORE_NOTIFY: 1,
    MsgClass.ATTACH_REQUEST: 2,
    MsgClass.GA_REQUEST: 3,
    MsgClass.CONFIG_DELIVERY: 4,
    MsgClass.ATTACH_RESPONSE: 4,
    MsgClass.GA_PROVISION: 4,
    MsgClass.NOTIFICATION_BROADCAST: 4,
    MsgClass.UE_REQUEST: 5,
    MsgClass.UE_RETRANSMISSION: 5,
    MsgClass.SHARE_BROADCAST: 5,
}
N_PRIORITIES = 6


class Crypto(enum.IntEnum):
    ENCRYPT = 0
    DECRYPT = 1
    SIGN = 2
    VERIFY = 3
    HASH = 4
    BATCH_HASH = 5


class Message:
    __slots__ = (
        "id",
        "cls",
        "sender",
        "receiver",
        "size",
        "crypto_ops",
        "tx_ops",
        "created_at",
        "enqueued_at",
        "service_start_at",
        "payload",
    )

    _ids = itertools.count()

    def __init__(
        self,
        cls: MsgClass,
        sender,
        receiver,
        payload=None,
        crypto_ops: tuple = (),
        tx_ops: tuple = (),
        created_at: float = 0.0,
        size: int = 3000,
        id: Optional[int] = None,
    ):
        if size <= 0:
            raise ValueError("message size must be positive")
        self.id = next(Message._ids) if id is None else id
        self.cls = cls
        self.sender = sender
        self.receiver = receiver
        self.payload = payload
        self.crypto_ops = crypto_ops  # work done by the receiver
        self.tx_ops = tx_ops  # work done by the sender's processor
        self.size = size
        self.created_at = created_at
        self.enqueued_at = None
        self.service_start_at = None

    def __repr__(self):
        return (
            f"Message(id={self.id}, cls={MsgClass(self.cls).label}, "
            f"{self.sender}->{self.receiver})"
        )


@dataclass(frozen=True)
class DelayModel:
    """Per-hop delay constants in ms (transmission in us)."""

    inter_satellite_ms: float = 1.0
    ground_satellite_ms: float = 3.0
    core_satellite_ms: float = 10.0
    transmission_us: float = 1.0
    physical_ms: float = 0.05
    logic_ms: float = 0.05
    encrypt_decrypt_ms: float = 0.1
    sign_verify_ms: float = 0.3
    hash_ms: float = 0.05
    batch_hash_ms: float = 0.1
    ground_broadcast_ms: float = 1.0
    propagation: str = "fixed"

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (int, float)) and v < 0:
                raise ValueError(f"{f.name} must be non-negative")
        if self.propagation not in ("fixed", "distance"):
            raise ValueError("propagation must be 'fixed' or 'distance'")

    def crypto_costs(self) -> list[float]:
        c = [0.0] * len(Crypto)
        c[Crypto.ENCRYPT] = c[Crypto.DECRYPT] = self.encrypt_decrypt_ms
        c[Crypto.SIGN] = c[Crypto.VERIFY] = self.sign_verify_ms
        c[Crypto.HASH] = self.hash_ms
        c[Crypto.BATCH_HASH] = self.batch_hash_ms
        return c

    @property
    def nominal_altitude_km(self) -> float:
        return self.ground_satellite_ms * SPEED_OF_LIGHT_KM_MS


_LINK_FIELD = {
    frozenset(("ue", "sat")): "ground_satellite_ms",
    frozenset(("sat",)): "inter_satellite_ms",
    frozenset(("sat", "core")): "core_satellite_ms",
    frozenset(("ue",)): "ground_broadcast_ms",
}


def link_delay(
    model: DelayModel, sender: str, receiver: str, distance_km: Optional[float] = None
) -> float:
    """Propagation + transmission delay in ms between two node kinds.

    Node kinds are ``"ue"``, ``"sat"`` and ``"core"``.  In ``distance`` mode a
    supplied ``distance_km`` replaces the fixed constant (speed of light).
    """
    key = frozenset((sender, receiver))
    name = _LINK_FIELD.get(key)
    if name is None:
        raise ValueError(f"unknown link class {sender}->{receiver}")
    if model.propagation == "distance" and distance_km is not None:
        prop = distance_km / SPEED_OF_LIGHT_KM_MS
    else:
        prop = getattr(model, name)
    return prop + model.transmission_us / 1000.0


def ops_cost(model: DelayModel, ops) -> float:
    costs = model.crypto_costs()
    return sum(costs[o] for o in ops)


def service_time(model: DelayModel, msg: Message) -> float:
    """Processor time for receiving ``msg`` (its own crypto work only)."""
    return model.physical_ms + model.logic_ms + ops_cost(model, msg.crypto_ops)


class Offer(enum.Enum):
    START = "start"
    QUEUED = "queued"
    DROPPED = "dropped"


class NodeQueue:
    """Bounded priority queue in front of a pool of identical processors.

    Messages of equal priority leave in arrival order.  Satellite-internal
    jobs wait in a separate unbounded lane served ahead of everything else.

    With ``push_out`` a full queue makes room for an arrival by evicting the
    newest queued message of strictly lower priority; the victim is left in
    :attr:`evicted` for the caller to account as a drop.
    """

    def __init__(
        self,
        capacity: int = 500,
        processors: int = 4,
        priority: Optional[dict] = None,
        push_out: bool = True,
    ):
        if capacity < 0 or processors < 1:
            raise ValueError("capacity must be >= 0 and processors >= 1")
        self.capacity = capacity
        self.processors = processors
        self.push_out = push_out
        self.evicted: Optional[Message] = None
        prio = DEFAULT_PRIORITY if priority is None else priority
        self._prio = [prio.get(c, N_PRIORITIES - 1) for c in MsgClass]
        self._lanes = [deque() for _ in range(N_PRIORITIES)]
        self._internal: deque = deque()
        self.length = 0
        self.busy = 0
        self.busy_until = [0.0] * processors
        self.max_length = 0
        self.max_busy = 0

    def __len__(self):
        return self.length

    def priority_of(self, msg: Message) -> int:
        return self._prio[msg.cls]

    def offer(self, msg: Message, now: float) -> Offer:
        msg.enqueued_at = now
        self.evicted = None
        if msg.cls == MsgClass.GROUP_MONITOR:
            if self.busy < self.processors:
                return Offer.START
            self._internal.append(msg)
            return Offer.QUEUED
        if self.busy < self.processors and self.length == 0:
            return Offer.START
        p = self._prio[msg.cls]
        if self.length >= self.capacity:
            if not self.push_out or not self._evict_below(p):
                return Offer.DROPPED
        self._lanes[p].append(msg)
        self.length += 1
        if self.length > self.max_length:
            self.max_length = self.length
        return Offer.QUEUED

    def _evict_below(self, p: int) -> bool:
        for q in range(N_PRIORITIES - 1, p, -1):
            lane = self._lanes[q]
            if lane:
                self.evicted = lane.pop()
                self.length -= 1
                return True
        return False

    def acquire(self, now: float, until: float) -> int:
        """Claim an idle processor until ``until``; returns its index."""
        if self.busy >= self.processors:
            raise RuntimeError("no idle processor")
        bu = self.busy_until
        # the busy count is authoritative; reuse the slot that freed first
        i = min(range(self.processors), key=bu.__getitem__)
        bu[i] = until
        self.busy += 1
        if self.busy > self.max_busy:
            self.max_busy = self.busy
        return i

    def release(self, now: float) -> None:
        self.busy -= 1

    def pop_next(self) -> Optional[Message]:
        if self._internal:
            return self._internal.popleft()
        if not self.length:
            return None
        for lane in self._lanes:
            if lane:
                self.length -= 1
                return lane.popleft()
        return None  # pragma: no cover

    def highest_queued_priority(self) -> Optional[int]:
        for p, lane in enumerate(self._lanes):
            if lane:
                return p
        return None

    def queued(self) -> list:
        return [m for lane in self._lanes for m in lane]
