"""UE, satellite and core behaviour for baseline (HO) and group (GHO) handover.

One :class:`Simulation` owns every entity and runs them on a single
:class:`~ntn_handover.engine.Scheduler`.  Satellites pay processor time for
what they receive *and* for the crypto work of what they send in response;
UEs and the core are modelled without processing queues.

Baseline flow, per UE::

    UE --request--> source --config req--> target --config--> source
    source --config--> UE, source --notify--> core --ack--> source
    UE --attach--> target --attach ok--> UE

Group flow, per group: the source signs a SwitchToGroupHandover broadcast and
provisions K_G aggregators with the commitment list.  When the group crosses
the handover line every member broadcasts its share on the ground; an
aggregator that has verified more than ``threshold`` shares sends one ticket
to the source, which checks it and asks the target once for the whole group.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import geometry as geo
from . import protocol as pc
from .engine import (
    Crypto,
    DelayModel,
    EventKind,
    Message,
    MsgClass,
    NodeQueue,
    Offer,
    Scheduler,
    link_delay,
)
from .metrics import UE_CONFIGURED, UE_FAILED, UE_REQUEST_SENT, VERIFY_FAILED, MetricsLedger

CORE_ID = "CORE"

# work a *receiving* satellite does per class, on top of physical + logic
DEFAULT_RX_OPS = {
    MsgClass.UE_REQUEST: (Crypto.DECRYPT,),
    MsgClass.UE_RETRANSMISSION: (Crypto.DECRYPT,),
    MsgClass.GA_REQUEST: (Crypto.BATCH_HASH,),
    MsgClass.INTER_SATELLITE: (Crypto.DECRYPT,),
    MsgClass.CORE_RESPONSE: (Crypto.HASH,),  # integrity check of the ack
    MsgClass.ATTACH_REQUEST: (Crypto.DECRYPT, Crypto.HASH),
    MsgClass.GROUP_MONITOR: (),
}
# work the *sending* satellite does per outbound class
DEFAULT_TX_OPS = {
    MsgClass.INTER_SATELLITE: (Crypto.ENCRYPT,),
    MsgClass.CONFIG_DELIVERY: (Crypto.ENCRYPT,),
    MsgClass.CORE_NOTIFY: (Crypto.ENCRYPT,),
    MsgClass.GA_PROVISION: (Crypto.ENCRYPT,),
    MsgClass.NOTIFICATION_BROADCAST: (Crypto.SIGN,),
    MsgClass.ATTACH_RESPONSE: (Crypto.ENCRYPT,),
}


class Phase(enum.IntEnum):
    CONNECTED = 0
    AWAITING_HO_RESPONSE = 1
    GROUP_NOTIFIED = 2
    SHARE_BROADCAST = 3
    AWAITING_GROUP_CONFIG = 4
    CONFIGURED = 5
    ATTACHING = 6
    ATTACHED = 7
    FAILED = 8


WAITING = frozenset(
    (Phase.AWAITING_HO_RESPONSE, Phase.SHARE_BROADCAST, Phase.AWAITING_GROUP_CONFIG)
)


class GroupStatus(enum.Enum):
    MONITORING = "monitoring"
    NOTIFIED = "notified"
    REQUESTED = "requested"
    CONFIGURED = "configured"
    CANCELLED = "cancelled"
    UNSUITABLE = "unsuitable"


# trigger-check tags
TRIG_UE = 0
TRIG_GROUP = 1
TRIG_MONITOR = 2
TRIG_EXIT = 3


class UeState:
    __slots__ = (
        "id",
        "x",
        "y",
        "gid",
        "is_ga",
        "phase",
        "retransmit_count",
        "attach_retx",
        "timer",
        "timer_token",
        "share",
        "rand",
        "request_sent_at",
        "config_received_at",
        "failed_at",
        "serving",
        "target",
        "ga",
        "pending_shares",
        "ga_request",
        "seen",
        "mode",
        "kind",
    )

    def __init__(self, uid: int, x: float, y: float):
        self.id = uid
        self.x = x
        self.y = y
        self.gid: Optional[str] = None
        self.is_ga = False
        self.phase = Phase.CONNECTED
        self.retransmit_count = 0
        self.attach_retx = 0
        self.timer: Optional[float] = None
        self.timer_token = 0
        self.share: Optional[bytes] = None
        self.rand: Optional[bytes] = None
        self.request_sent_at: Optional[float] = None
        self.config_received_at: Optional[float] = None
        self.failed_at: Optional[float] = None
        self.serving = 0
        self.target = 1
        self.ga: Optional[pc.GaState] = None
        self.pending_shares: Optional[list] = None
        self.ga_request: Optional[bytes] = None
        self.seen: Optional[set] = None
        self.mode = "ho"
        self.kind = "ue"

    @property
    def position(self) -> geo.GroundPoint:
        return geo.GroundPoint(self.x, self.y)

    def __repr__(self):
        return f"UE{self.id}"


@dataclass
class SourceGroup:
    """What a source satellite knows about one group for one epoch."""

    gid: str
    members: list  # ue ids in commitment-slot order
    rand: bytes
    cm: pc.CommitmentMap
    csm: dict
    centroid: tuple
    status: GroupStatus = GroupStatus.MONITORING
    threshold: int = 0
    gas: list = field(default_factory=list)
    notified: list = field(default_factory=list)
    forwarded_at: Optional[float] = None
    configs: Optional[dict] = None
    kind: str = "group"

    @property
    def id(self) -> str:
        return self.gid

    # a broadcast is delivered at the group centroid in distance mode
    @property
    def x(self) -> float:
        return self.centroid[0]

    @property
    def y(self) -> float:
        return self.centroid[1]

    def __repr__(self):
        return f"SourceGroup({self.gid})"


@dataclass(frozen=True)
class HandoverConfig:
    """Per-UE handover bundle; tokens are opaque stand-ins for real RRC/keys."""

    ue: int
    token: bytes
    share: Optional[bytes] = None
    rand: Optional[bytes] = None
    target_pk: Optional[bytes] = None
    kgnb_token: Optional[bytes] = None


@dataclass(frozen=True)
class HoConfigRequest:
    ue: int
    source: int


@dataclass(frozen=True)
class HoConfigResponse:
    ue: int
    config: HandoverConfig


@dataclass(frozen=True)
class GroupConfigRequest:
    gid: str
    members: tuple
    source: int
    request: bytes


@dataclass(frozen=True)
class GroupConfigResponse:
    gid: str
    configs: tuple  # HandoverConfig per member
    commitment_map: pc.CommitmentMap


@dataclass(frozen=True)
class Broadcast:
    """Payload of a satellite ground broadcast to a set of UEs."""

    wire: bytes
    recipients: tuple
    source: int
    rand: bytes


class SatelliteNode:
    def __init__(self, idx: int, track: geo.SatelliteTrack, keys: pc.SatKeyPair, queue: NodeQueue):
        self.idx = idx
        self.id = track.id
        self.track = track
        self.keys = keys
        self.pk_bytes = keys.public.public_bytes_raw()
        self.queue = queue
        self.kind = "sat"
        # source role
        self.ho_state: dict = {}  # ue -> forward time (float) or HandoverConfig
        self.groups: dict = {}  # gid -> SourceGroup
        # target role
        self.ho_responses: dict = {}
        self.group_responses: dict = {}
        self.attached: set = set()

    def __repr__(self):
        return self.id


class CoreNode:
    kind = "core"
    id = CORE_ID

    def __repr__(self):
        return CORE_ID


def monitor_decision(status: GroupStatus, connected: int, min_group_size: int) -> Optional[pc.Action]:
    """Edge-triggered group suitability: what, if anything, to broadcast."""
    suitable = connected >= min_group_size
    if suitable and status == GroupStatus.MONITORING:
        return pc.Action.SWITCH
    if not suitable and status == GroupStatus.NOTIFIED:
        return pc.Action.CANCEL
    return None


class Simulation:
    """One configured handover experiment.

    Build it with :func:`ntn_handover.runner.build_simulation` or
    directly from UE positions and satellite tracks; call :meth:`run`.
    """

    def __init__(
        self,
        config,
        positions: np.ndarray,
        tracks: list,
        groups=(),
        ledger: Optional[MetricsLedger] = None,
        t_end_ms: Optional[float] = None,
        trace: bool = False,
        rx_ops: Optional[dict] = None,
        tx_ops: Optional[dict] = None,
    ):
        self.cfg = config
        self.delays: DelayModel = config.delay_model()
        self.sched = Scheduler(trace=trace)
        self.ledger = ledger or MetricsLedger(
            bucket_ms=config.bucket_ms,
            protocol=config.protocol,
            seed=config.seed,
            ue_count=len(positions),
        )
        self.rng = random.Random(f"ntn-handover/{config.seed}/protocol")
        self.rx_ops = dict(DEFAULT_RX_OPS, **(rx_ops or {}))
        self.tx_ops = dict(DEFAULT_TX_OPS, **(tx_ops or {}))
        self._cost = self.delays.crypto_costs()
        self._base = self.delays.physical_ms + self.delays.logic_ms
        self._rx_cost = [
            self._base + sum(self._cost[o] for o in self.rx_ops.get(c, ())) for c in MsgClass
        ]
        self._tx_cost = [sum(self._cost[o] for o in self.tx_ops.get(c, ())) for c in MsgClass]
        d = self.delays
        tx = d.transmission_us / 1000.0
        self._d_ground = d.ground_satellite_ms + tx
        self._d_isl = d.inter_satellite_ms + tx
        self._d_core = d.core_satellite_ms + tx
        self._d_bcast = d.ground_broadcast_ms + tx
        self.distance_mode = d.propagation == "distance"

        self.tracks = list(tracks)
        self.sats = []
        for i, tr in enumerate(self.tracks):
            keys = pc.SatKeyPair.generate(random.Random(f"ntn-handover/{config.seed}/key/{tr.id}"))
            q = NodeQueue(config.queue_capacity, config.processors, push_out=config.push_out)
            self.sats.append(SatelliteNode(i, tr, keys, q))
        self.core = CoreNode()
        self.ues = [UeState(i, float(x), float(y)) for i, (x, y) in enumerate(positions)]
        self.positions = np.asarray(positions, dtype=float)
        self.v_km_ms = math.hypot(*self.tracks[0].velocity) / 1000.0
        self.gho = config.protocol == "gho"
        self.group_assignments = list(groups)
        self.last_source = len(self.sats) - 2 if config.continuous_handover else 0
        self.t_end = t_end_ms if t_end_ms is not None else (config.t_end_ms or self.default_t_end())

        s = self.sched
        s.on(EventKind.MESSAGE_ARRIVAL, self._on_arrival)
        s.on(EventKind.TIMER_EXPIRY, self._on_timer)
        s.on(EventKind.PROCESSOR_FREE, self._on_processor_free)
        s.on(EventKind.TRIGGER_CHECK, self._on_trigger)
        self._sat_handlers = {
            MsgClass.UE_REQUEST: self._src_ue_request,
            MsgClass.UE_RETRANSMISSION: self._src_ue_request,
            MsgClass.GA_REQUEST: self._src_ga_request,
            MsgClass.INTER_SATELLITE: self._sat_inter_satellite,
            MsgClass.CORE_RESPONSE: self._src_core_response,
            MsgClass.ATTACH_REQUEST: self._tgt_attach,
            MsgClass.GROUP_MONITOR: self._src_monitor,
        }
        self.ticket_rejections = 0
        self.attach_failures = 0
        self._scheduled = False

    # ------------------------------------------------------------------
    # setup

    def default_t_end(self) -> float:
        """Latest footprint exit over the last source sweep plus retry budget."""
        last = self.tracks[self.last_source]
        ex = geo.exit_times(self.positions[:, 0], self.positions[:, 1], last)
        t_exit = float(np.nanmax(ex)) * 1000.0 if np.isfinite(ex).any() else 0.0
        budget = (self.cfg.max_retransmissions + 1) * max(self.cfg.ho_timeout_ms, self.cfg.gho_timeout_ms)
        return math.ceil((t_exit + budget + 100.0) / self.cfg.bucket_ms) * self.cfg.bucket_ms

    def schedule_initial(self) -> None:
        if self._scheduled:
            return
        self._scheduled = True
        self._schedule_individual_triggers(range(len(self.ues)), 0)
        if self.gho:
            sat = self.sats[0]
            for ga in self.group_assignments:
                members = list(ga.members)
                rand = self.rng.randbytes(self.cfg.rand_bytes)
                shares, cm, csm = pc.generate_shares(
                    ga.gid, rand, len(members), self.rng, self.cfg.share_bytes, self.cfg.hash_name
                )
                for u, sh in zip(members, shares):
                    ue = self.ues[u]
                    ue.gid, ue.share, ue.rand = ga.gid, sh, rand
                self._install_group(sat, ga.gid, members, rand, cm, csm)

    def _schedule_individual_triggers(self, ue_ids, source: int) -> None:
        if source + 1 >= len(self.sats) or source > self.last_source:
            return
        ids = np.fromiter(ue_ids, dtype=np.int64)
        if ids.size == 0:
            return
        src, tgt = self.tracks[source], self.tracks[source + 1]
        t = geo.crossing_times(self.positions[ids, 0], self.positions[ids, 1], src, tgt) * 1000.0
        now = self.sched.now
        for u, tu in zip(ids.tolist(), t.tolist()):
            if tu != tu or tu > self.t_end:
                continue
            self.sched.schedule(max(now, tu), EventKind.TRIGGER_CHECK, self.ues[u], (TRIG_UE, source))

    def _install_group(self, sat: SatelliteNode, gid, members, rand, cm, csm) -> None:
        if sat.idx + 1 >= len(self.sats) or sat.idx > self.last_source:
            return
        pts = self.positions[members]
        cx, cy = float(pts[:, 0].mean()), float(pts[:, 1].mean())
        g = SourceGroup(gid, list(members), rand, cm, csm, (cx, cy))
        sat.groups[gid] = g
        t_cross = geo.midline_crossing_time(
            geo.GroundPoint(cx, cy), sat.track, self.tracks[sat.idx + 1]
        )
        if t_cross is None:
            return
        t_cross *= 1000.0
        now = self.sched.now
        t_mon = max(now, t_cross - self.cfg.notify_lead_km / self.v_km_ms)
        if t_mon <= self.t_end:
            self.sched.schedule(t_mon, EventKind.TRIGGER_CHECK, g, (TRIG_MONITOR, sat.idx))
        if self.cfg.gho_trigger == "group" and t_cross <= self.t_end:
            self.sched.schedule(max(now, t_cross), EventKind.TRIGGER_CHECK, g, (TRIG_GROUP, sat.idx))

    # ------------------------------------------------------------------
    # messaging

    def _delay(self, a, b) -> float:
        ka, kb = a.kind, b.kind
        if self.distance_mode:
            return self._distance_delay(a, b)
        if ka == "sat" and kb == "sat":
            return self._d_isl
        if ka == "core" or kb == "core":
            return self._d_core
        if ka == "ue" and kb == "ue":
            return self._d_bcast
        return self._d_ground

    def _distance_delay(self, a, b) -> float:
        kinds = (a.kind, b.kind)
        if "core" in kinds or kinds == ("ue", "ue"):
            return link_delay(self.delays, a.kind, b.kind)
        t = self.sched.now / 1000.0
        if kinds == ("sat", "sat"):
            dist = geo.distance(geo.position_at(a.track, t), geo.position_at(b.track, t))
        else:
            ue, sat = (b, a) if a.kind == "sat" else (a, b)
            p = geo.position_at(sat.track, t)
            ground = math.hypot(ue.x - p.x, ue.y - p.y)
            dist = math.hypot(ground, self.delays.nominal_altitude_km)
        return link_delay(self.delays, "sat", "sat" if kinds == ("sat", "sat") else "ue", dist)

    def send(self, cls, sender, receiver, payload=None) -> Message:
        msg = Message(
            cls,
            sender.id,
            receiver.id,
            payload,
            self.rx_ops.get(cls, ()),
            self.tx_ops.get(cls, ()),
            self.sched.now,
            self.cfg.packet_bytes,
        )
        self.sched.schedule(
            self.sched.now + self._delay(sender, receiver), EventKind.MESSAGE_ARRIVAL, receiver, msg
        )
        return msg

    def _on_arrival(self, node, msg) -> None:
        kind = node.kind
        if kind == "sat":
            self._sat_arrival(node, msg)
        elif kind == "ue":
            self._ue_arrival(node, msg)
        elif kind == "core":
            self._core_arrival(msg)
        elif kind == "group":
            self._broadcast_arrival(msg)
        else:  # pragma: no cover
            raise RuntimeError(f"unknown node kind {kind}")

    # ------------------------------------------------------------------
    # satellite processing

    def _sat_arrival(self, sat: SatelliteNode, msg: Message) -> None:
        now = self.sched.now
        res = sat.queue.offer(msg, now)
        if msg.cls != MsgClass.GROUP_MONITOR:
            self.ledger.arrival(now, sat.id, msg.cls, res is Offer.DROPPED)
            victim = sat.queue.evicted
            if victim is not None:
                self.ledger.evicted(now, sat.id, victim.cls)
        if res is Offer.START:
            self._begin_service(sat, msg, now)

    def _begin_service(self, sat: SatelliteNode, msg: Message, now: float) -> None:
        msg.service_start_at = now
        out, extra = self._sat_handlers[msg.cls](sat, msg, now)
        dur = self._rx_cost[msg.cls]
        for o in out:
            dur += self._tx_cost[o[0]]
        for op in extra:
            dur += self._cost[op]
        sat.queue.acquire(now, now + dur)
        self.sched.schedule(now + dur, EventKind.PROCESSOR_FREE, sat, (msg, out))

    def _on_processor_free(self, sat: SatelliteNode, item) -> None:
        msg, out = item
        now = self.sched.now
        for cls, receiver, payload in out:
            self.send(cls, sat, receiver, payload)
        if msg.cls != MsgClass.GROUP_MONITOR:
            self.ledger.service_done(now, sat.id)
        q = sat.queue
        q.release(now)
        nxt = q.pop_next()
        if nxt is not None:
            self._begin_service(sat, nxt, now)

    def _reforward_after(self) -> float:
        return self.cfg.gho_timeout_ms if self.gho else self.cfg.ho_timeout_ms

    # -- source role, baseline ------------------------------------------

    def _src_ue_request(self, sat, msg, now):
        ue = self.ues[msg.sender]
        st = sat.ho_state.get(ue.id)
        tgt = self.sats[sat.idx + 1]
        if st is None:
            sat.ho_state[ue.id] = now
            return [(MsgClass.INTER_SATELLITE, tgt, HoConfigRequest(ue.id, sat.idx))], ()
        if isinstance(st, HandoverConfig):
            return [(MsgClass.CONFIG_DELIVERY, ue, (sat.idx, st))], ()
        if now - st > self._reforward_after():
            sat.ho_state[ue.id] = now
            return [(MsgClass.INTER_SATELLITE, tgt, HoConfigRequest(ue.id, sat.idx))], ()
        return (), ()

    def _src_ho_response(self, sat, resp: HoConfigResponse, now):
        if isinstance(sat.ho_state.get(resp.ue), HandoverConfig):
            return (), ()
        sat.ho_state[resp.ue] = resp.config
        return [
            (MsgClass.CONFIG_DELIVERY, self.ues[resp.ue], (sat.idx, resp.config)),
            (MsgClass.CORE_NOTIFY, self.core, (sat.idx, "ue", resp.ue)),
        ], ()

    def _src_core_response(self, sat, msg, now):
        return (), ()

    def _sat_inter_satellite(self, sat, msg, now):
        p = msg.payload
        if isinstance(p, HoConfigRequest):
            return self._tgt_ho_request(sat, p, now)
        if isinstance(p, HoConfigResponse):
            return self._src_ho_response(sat, p, now)
        if isinstance(p, GroupConfigRequest):
            return self._tgt_group_request(sat, p, now)
        if isinstance(p, GroupConfigResponse):
            return self._src_group_response(sat, p, now)
        raise TypeError(f"unexpected inter-satellite payload {type(p).__name__}")

    # -- target role ----------------------------------------------------

    def _tgt_ho_request(self, sat, req: HoConfigRequest, now):
        cfg = sat.ho_responses.get(req.ue)
        if cfg is None:
            cfg = HandoverConfig(req.ue, self.rng.randbytes(8), target_pk=sat.pk_bytes)
            sat.ho_responses[req.ue] = cfg
        return [(MsgClass.INTER_SATELLITE, self.sats[req.source], HoConfigResponse(req.ue, cfg))], ()

    def _tgt_group_request(self, sat, req: GroupConfigRequest, now):
        key = (req.gid, req.source)
        resp = sat.group_responses.get(key)
        extra = ()
        if resp is None:
            members = list(req.members)
            rand = self.rng.randbytes(self.cfg.rand_bytes)
            shares, cm, csm = pc.generate_shares(
                req.gid, rand, len(members), self.rng, self.cfg.share_bytes, self.cfg.hash_name
            )
            configs = tuple(
                HandoverConfig(u, self.rng.randbytes(8), sh, rand, sat.pk_bytes, self.rng.randbytes(8))
                for u, sh in zip(members, shares)
            )
            resp = GroupConfigResponse(req.gid, configs, cm)
            sat.group_responses[key] = resp
            # the target issues the shares, so it is the next epoch's verifier
            self._install_group(sat, req.gid, members, rand, cm, csm)
            extra = (Crypto.BATCH_HASH,)
        return [(MsgClass.INTER_SATELLITE, self.sats[req.source], resp)], extra

    def _tgt_attach(self, sat, msg, now):
        sat.attached.add(msg.sender)
        return [(MsgClass.ATTACH_RESPONSE, self.ues[msg.sender], sat.idx)], ()

    # -- source role, group ---------------------------------------------

    def _connected_members(self, sat, g: SourceGroup) -> list:
        ues = self.ues
        return [
            u
            for u in g.members
            if ues[u].serving == sat.idx and ues[u].phase == Phase.CONNECTED and ues[u].gid == g.gid
        ]

    def _src_monitor(self, sat, msg, now):
        g: SourceGroup = msg.payload
        connected = self._connected_members(sat, g) if g.status == GroupStatus.MONITORING else g.notified
        action = monitor_decision(g.status, len(connected), self.cfg.min_group_size)
        if action is None:
            if g.status == GroupStatus.MONITORING:
                g.status = GroupStatus.UNSUITABLE
            return (), ()
        notif = pc.make_notification(sat.keys, sat.id, g.rand, g.gid, action, now)
        wire = pc.encode_notification(notif)
        out = []
        if action == pc.Action.SWITCH:
            g.status = GroupStatus.NOTIFIED
            g.notified = connected
            g.threshold = pc.decide_threshold(len(connected), self.cfg.threshold_fraction)
            k = min(self.cfg.k_ga, len(connected))
            g.gas = pc.select_aggregators(connected, k, self.rng)
            out.append((MsgClass.NOTIFICATION_BROADCAST, g, Broadcast(wire, tuple(connected), sat.idx, g.rand)))
            for u in g.gas:
                out.append((MsgClass.GA_PROVISION, self.ues[u], (g.gid, g.rand, g.threshold, g.cm)))
        else:
            g.status = GroupStatus.CANCELLED
            out.append((MsgClass.NOTIFICATION_BROADCAST, g, Broadcast(wire, tuple(g.notified), sat.idx, g.rand)))
        return out, ()

    def _src_ga_request(self, sat, msg, now):
        try:
            req = pc.decode_group_request(msg.payload, self.cfg.share_bytes)
        except pc.ProtocolError:
            req = None
        g = sat.groups.get(req.gid) if req is not None else None
        if (
            g is None
            or g.status in (GroupStatus.MONITORING, GroupStatus.UNSUITABLE, GroupStatus.CANCELLED)
            or len(req.aggregated_commitment) <= g.threshold
            or not pc.verify_ticket(req, g.csm, g.cm, self.cfg.share_bytes)
        ):
            self.ticket_rejections += 1
            self.ledger.apply(now, sat.id, VERIFY_FAILED, "", msg.sender)
            return (), ()
        tgt = self.sats[sat.idx + 1]
        if g.forwarded_at is None or (
            g.configs is None and now - g.forwarded_at > self._reforward_after()
        ):
            g.forwarded_at = now
            g.status = GroupStatus.REQUESTED
            fwd = GroupConfigRequest(g.gid, tuple(g.notified), sat.idx, msg.payload)
            return [(MsgClass.INTER_SATELLITE, tgt, fwd)], ()
        if g.configs is not None:
            cfg = g.configs.get(msg.sender)
            if cfg is not None:
                return [(MsgClass.CONFIG_DELIVERY, self.ues[msg.sender], (sat.idx, cfg))], ()
        return (), ()

    def _src_group_response(self, sat, resp: GroupConfigResponse, now):
        g = sat.groups.get(resp.gid)
        if g is None or g.configs is not None:
            return (), ()
        g.configs = {c.ue: c for c in resp.configs}
        g.status = GroupStatus.CONFIGURED
        out = [(MsgClass.CONFIG_DELIVERY, self.ues[c.ue], (sat.idx, c)) for c in resp.configs]
        out.append((MsgClass.CORE_NOTIFY, self.core, (sat.idx, "group", resp.gid)))
        return out, ()

    # ------------------------------------------------------------------
    # core

    def _core_arrival(self, msg: Message) -> None:
        now = self.sched.now
        self.ledger.arrival(now, CORE_ID, msg.cls, False)
        self.ledger.service_done(now, CORE_ID)
        source_idx = msg.payload[0]
        self.send(MsgClass.CORE_RESPONSE, self.core, self.sats[source_idx], msg.payload)

    # ------------------------------------------------------------------
    # UE behaviour

    def _timeout(self, ue) -> float:
        return self.cfg.gho_timeout_ms if ue.mode == "gho" else self.cfg.ho_timeout_ms

    def _arm(self, ue, delay: float) -> None:
        ue.timer_token += 1
        ue.timer = self.sched.now + delay
        self.sched.schedule(ue.timer, EventKind.TIMER_EXPIRY, ue, ue.timer_token)

    def _disarm(self, ue) -> None:
        ue.timer_token += 1
        ue.timer = None

    def _start_request(self, ue) -> None:
        now = self.sched.now
        src = self.sats[ue.serving]
        ue.mode = "ho"
        ue.phase = Phase.AWAITING_HO_RESPONSE
        ue.retransmit_count = 0
        self._mark_request(ue, now)
        self.send(MsgClass.UE_REQUEST, ue, src)
        self._arm(ue, self.cfg.ho_timeout_ms)

    def _mark_request(self, ue, now) -> None:
        if ue.request_sent_at is None:
            ue.request_sent_at = now
            self.ledger.apply(now, self.sats[ue.serving].id, UE_REQUEST_SENT, "", ue.id)
            self._schedule_exit(ue)

    def _schedule_exit(self, ue) -> None:
        t = geo.footprint_exit_time(ue.position, self.sats[ue.serving].track)
        now = self.sched.now
        if t is None:
            t_ms = now
        else:
            t_ms = max(now, t * 1000.0)
        self.sched.schedule(t_ms, EventKind.TRIGGER_CHECK, ue, (TRIG_EXIT, ue.serving))

    def _start_share_broadcast(self, ue, g: SourceGroup) -> None:
        now = self.sched.now
        ue.mode = "gho"
        ue.phase = Phase.SHARE_BROADCAST
        ue.retransmit_count = 0
        self._mark_request(ue, now)
        self._broadcast_share(ue, g)
        if ue.phase == Phase.SHARE_BROADCAST or ue.phase == Phase.AWAITING_GROUP_CONFIG:
            if ue.phase == Phase.SHARE_BROADCAST:
                self._arm(ue, self.cfg.gho_timeout_ms)

    def _broadcast_share(self, ue, g: SourceGroup) -> None:
        wire = pc.encode_share_broadcast(ue.gid, ue.share)
        for u in g.gas:
            if u == ue.id:
                self._ga_receive(ue, wire)
            else:
                self.send(MsgClass.SHARE_BROADCAST, ue, self.ues[u], wire)

    def _on_trigger(self, obj, tag) -> None:
        what, sat_idx = tag
        if what == TRIG_UE:
            ue = obj
            if ue.serving != sat_idx:
                return
            if ue.phase == Phase.CONNECTED:
                self._start_request(ue)
            elif ue.phase == Phase.GROUP_NOTIFIED and self.cfg.gho_trigger == "individual":
                self._start_share_broadcast(ue, self.sats[sat_idx].groups[ue.gid])
        elif what == TRIG_GROUP:
            g = obj
            for u in g.notified:
                ue = self.ues[u]
                if ue.serving == sat_idx and ue.phase == Phase.GROUP_NOTIFIED:
                    self._start_share_broadcast(ue, g)
        elif what == TRIG_MONITOR:
            sat = self.sats[sat_idx]
            job = Message(MsgClass.GROUP_MONITOR, sat.id, sat.id, obj, created_at=self.sched.now)
            self._sat_arrival(sat, job)
        elif what == TRIG_EXIT:
            ue = obj
            if ue.serving != sat_idx:
                return
            if ue.phase in WAITING or ue.phase in (Phase.CONNECTED, Phase.GROUP_NOTIFIED):
                now = self.sched.now
                ue.phase = Phase.FAILED
                ue.failed_at = now
                self._disarm(ue)
                self.ledger.apply(now, self.sats[sat_idx].id, UE_FAILED, "", ue.id)

    def _on_timer(self, ue, token) -> None:
        if token != ue.timer_token:
            return
        ue.timer = None
        ph = ue.phase
        limit = self.cfg.max_retransmissions
        if ph == Phase.AWAITING_HO_RESPONSE:
            if ue.retransmit_count < limit:
                ue.retransmit_count += 1
                self.send(MsgClass.UE_RETRANSMISSION, ue, self.sats[ue.serving])
                self._arm(ue, self.cfg.ho_timeout_ms)
        elif ph == Phase.SHARE_BROADCAST:
            if ue.retransmit_count < limit:
                ue.retransmit_count += 1
                g = self.sats[ue.serving].groups[ue.gid]
                self._broadcast_share(ue, g)
                if ue.phase == Phase.SHARE_BROADCAST:
                    self._arm(ue, self.cfg.gho_timeout_ms)
        elif ph == Phase.AWAITING_GROUP_CONFIG:
            if ue.retransmit_count < limit:
                ue.retransmit_count += 1
                self.send(MsgClass.GA_REQUEST, ue, self.sats[ue.serving], ue.ga_request)
                self._arm(ue, self.cfg.gho_timeout_ms)
        elif ph == Phase.ATTACHING:
            if ue.attach_retx < limit:
                ue.attach_retx += 1
                self.send(MsgClass.ATTACH_REQUEST, ue, self.sats[ue.target])
                self._arm(ue, self._timeout(ue))
            else:
                ue.phase = Phase.FAILED
                ue.failed_at = self.sched.now
                self.attach_failures += 1

    def _ue_arrival(self, ue, msg: Message) -> None:
        cls = msg.cls
        if cls == MsgClass.CONFIG_DELIVERY:
            self._ue_config(ue, msg.payload)
        elif cls == MsgClass.ATTACH_RESPONSE:
            self._ue_attached(ue, msg.payload)
        elif cls == MsgClass.SHARE_BROADCAST:
            self._ga_receive(ue, msg.payload)
        elif cls == MsgClass.GA_PROVISION:
            gid, rand, threshold, cm = msg.payload
            if ue.gid != gid:
                return
            ue.is_ga = True
            ue.ga = pc.GaState(gid, rand, threshold, cm, self.cfg.share_bytes, self.cfg.hash_name)
            pending, ue.pending_shares = ue.pending_shares, None
            for wire in pending or ():
                self._ga_receive(ue, wire)

    def _ga_receive(self, ue, wire: bytes) -> None:
        if ue.ga is None:
            if ue.pending_shares is None:
                ue.pending_shares = []
            ue.pending_shares.append(wire)
            return
        gid, share = pc.decode_share_broadcast(wire, self.cfg.share_bytes)
        req = ue.ga.on_broadcast(gid, share)
        if req is None or ue.phase == Phase.FAILED:
            return
        ue.ga_request = pc.encode_group_request(req)
        if ue.phase in (Phase.CONFIGURED, Phase.ATTACHING, Phase.ATTACHED):
            return
        ue.mode = "gho"
        self._mark_request(ue, self.sched.now)
        ue.phase = Phase.AWAITING_GROUP_CONFIG
        self.send(MsgClass.GA_REQUEST, ue, self.sats[ue.serving], ue.ga_request)
        self._arm(ue, self.cfg.gho_timeout_ms)

    def _ue_config(self, ue, payload) -> None:
        source_idx, cfg = payload
        if ue.serving != source_idx or ue.phase in (
            Phase.FAILED,
            Phase.CONFIGURED,
            Phase.ATTACHING,
            Phase.ATTACHED,
        ):
            return
        now = self.sched.now
        src = self.sats[source_idx]
        self._mark_request(ue, now)
        ue.phase = Phase.CONFIGURED
        ue.config_received_at = now
        self.ledger.apply(now, src.id, UE_CONFIGURED, "", ue.id)
        if cfg.share is not None:
            ue.share, ue.rand = cfg.share, cfg.rand
        # attach to the target straight away
        ue.phase = Phase.ATTACHING
        ue.attach_retx = 0
        self.send(MsgClass.ATTACH_REQUEST, ue, self.sats[ue.target])
        self._arm(ue, self._timeout(ue))

    def _ue_attached(self, ue, sat_idx) -> None:
        if ue.phase != Phase.ATTACHING or sat_idx != ue.target:
            return
        self._disarm(ue)
        ue.phase = Phase.ATTACHED
        nxt = ue.target + 1
        if nxt < len(self.sats) and ue.target <= self.last_source:
            # becomes a regular connected UE of the new satellite
            ue.serving, ue.target = ue.target, nxt
            ue.phase = Phase.CONNECTED
            ue.is_ga = False
            ue.ga = None
            ue.ga_request = None
            ue.pending_shares = None
            ue.retransmit_count = 0
            ue.request_sent_at = ue.config_received_at = None
            self._schedule_individual_triggers([ue.id], ue.serving)

    def _broadcast_arrival(self, msg: Message) -> None:
        b: Broadcast = msg.payload
        now = self.sched.now
        try:
            notif = pc.decode_notification(b.wire)
        except pc.ProtocolError:
            return
        sat = self.sats[b.source]
        # recipients see identical bytes, so the signature check is shared
        if not pc.signature_valid(sat.keys.public, notif, b.rand):
            return
        window = self.cfg.freshness_window_ms
        ues = self.ues
        for u in b.recipients:
            ue = ues[u]
            if ue.gid != notif.gid or ue.serving != b.source:
                continue
            if ue.seen is None:
                ue.seen = set()
            if pc.check_fresh(notif, window, now, ue.seen) is not pc.Verdict.ACCEPT:
                continue
            if notif.action == pc.Action.SWITCH:
                if ue.phase == Phase.CONNECTED:
                    ue.phase = Phase.GROUP_NOTIFIED
            elif ue.phase == Phase.GROUP_NOTIFIED:
                ue.phase = Phase.CONNECTED
                t = geo.midline_crossing_time(ue.position, sat.track, self.tracks[b.source + 1])
                if t is not None and t * 1000.0 <= now:
                    self._start_request(ue)

    # ------------------------------------------------------------------

    def run(self, t_end_ms: Optional[float] = None) -> MetricsLedger:
        self.schedule_initial()
        self.sched.run_until(self.t_end if t_end_ms is None else t_end_ms)
        return self.ledger

    # invariant helpers -------------------------------------------------

    def conservation(self) -> dict:
        """Per-satellite (received, dropped, serviced, queued + in service)."""
        out = {}
        for sat in self.sats:
            q = sat.queue
            out[sat.id] = (
                self.ledger.total_received(sat.id),
                self.ledger.total_dropped(sat.id),
                self.ledger.serviced.get(sat.id, 0),
                len(q) + q.busy - len(q._internal),
            )
        return out
