"""Group handover cryptography: shares, commitments, tickets, notifications.

Shares are uniformly random byte strings issued per group member.  A group
aggregator (GA) checks each broadcast share against the hash commitments it
was provisioned with and XORs the accepted ones into a ticket.  The share
issuer holds the commitment -> share map and recomputes the XOR to confirm
that the listed members really released their shares.

Satellite broadcasts (switch to / cancel group handover) are Ed25519 signed
over ``action || RAN-ID || RAND || GID || timestamp`` and checked at the UE
for signature, freshness and replay.

All byte concatenations go through :func:`lp`, which prefixes every field
with its 4-byte big-endian length so variable-length fields cannot alias.
"""

from __future__ import annotations

import enum
import hashlib
import math
import random
import struct
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

SHARE_BYTES = 16
RAND_BYTES = 16
HASH_NAME = "sha256"
SIGNATURE_BYTES = 64
DEFAULT_FRESHNESS_MS = 5000.0

BytesLike = Union[bytes, bytearray, memoryview]


class ProtocolError(ValueError):
    pass


# ---------------------------------------------------------------------------
# encoding helpers


def as_bytes(value) -> bytes:
    if isinstance(value, (bytes, bytearray, memoryview)):
        return bytes(value)
    if isinstance(value, str):
        return value.encode("utf-8")
    if isinstance(value, int):
        return value.to_bytes(8, "big", signed=False)
    raise TypeError(f"cannot encode {type(value).__name__}")


def lp(*fields) -> bytes:
    """Length-prefixed concatenation of ``fields``."""
    out = bytearray()
    for f in fields:
        b = as_bytes(f)
        out += struct.pack(">I", len(b))
        out += b
    return bytes(out)


def _read_lp(buf: bytes, offset: int) -> tuple[bytes, int]:
    if offset + 4 > len(buf):
        raise ProtocolError("truncated length prefix")
    (n,) = struct.unpack_from(">I", buf, offset)
    offset += 4
    if offset + n > len(buf):
        raise ProtocolError("truncated field")
    return buf[offset : offset + n], offset + n


# ---------------------------------------------------------------------------
# shares and commitments


def commitment(gid, rand, share: bytes, hash_name: str = HASH_NAME) -> bytes:
    """Hash commitment binding ``share`` to its group and epoch."""
    return hashlib.new(hash_name, lp(gid, rand, share)).digest()


class CommitmentMap:
    """Member-ordered commitment list handed to every GA.

    Slot ``i`` holds the commitment of member ``i``'s share.
    """

    __slots__ = ("digests", "_index")

    def __init__(self, digests: Iterable[bytes]):
        self.digests = [bytes(d) for d in digests]
        self._index = {d: i for i, d in enumerate(self.digests)}
        if len(self._index) != len(self.digests):
            raise ProtocolError("duplicate commitment digest in CommitmentMap")

    def __len__(self):
        return len(self.digests)

    def __getitem__(self, i: int) -> bytes:
        return self.digests[i]

    def __eq__(self, other):
        return isinstance(other, CommitmentMap) and self.digests == other.digests

    def index(self, digest: bytes) -> Optional[int]:
        return self._index.get(digest)


# commitment digest -> share, held by the issuing satellite
CommitmentShareMap = dict


def generate_shares(
    gid,
    rand: bytes,
    n: int,
    rng: Union[int, random.Random],
    share_len: int = SHARE_BYTES,
    hash_name: str = HASH_NAME,
) -> tuple[list[bytes], CommitmentMap, dict]:
    """Draw ``n`` random shares with their commitment list and share map."""
    if n < 1:
        raise ValueError("need at least one member")
    if not isinstance(rng, random.Random):
        rng = random.Random(rng)
    shares = [rng.randbytes(share_len) for _ in range(n)]
    digests = [commitment(gid, rand, s, hash_name) for s in shares]
    cm = CommitmentMap(digests)
    csm = dict(zip(digests, shares))
    return shares, cm, csm


def xor_aggregate(ticket: bytes, share: bytes) -> bytes:
    if len(ticket) != len(share):
        raise ProtocolError(
            f"length mismatch: ticket {len(ticket)} vs share {len(share)}"
        )
    n = len(ticket)
    v = int.from_bytes(ticket, "big") ^ int.from_bytes(share, "big")
    return v.to_bytes(n, "big")


def xor_all(shares: Iterable[bytes], length: int = SHARE_BYTES) -> bytes:
    acc = 0
    for s in shares:
        if len(s) != length:
            raise ProtocolError("share length mismatch")
        acc ^= int.from_bytes(s, "big")
    return acc.to_bytes(length, "big")


# ---------------------------------------------------------------------------
# group aggregator


@dataclass(frozen=True)
class GroupHandoverRequest:
    gid: str
    ticket: bytes
    aggregated_commitment: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.aggregated_commitment)) != len(self.aggregated_commitment):
            raise ProtocolError("duplicate index in aggregated commitment")


@dataclass
class GaState:
    """Running state of one aggregator for one group and epoch.

    ``on_broadcast`` mutates in place; it fires at most one request.
    """

    gid: str
    rand: bytes
    threshold: int
    commitment_map: CommitmentMap
    share_len: int = SHARE_BYTES
    hash_name: str = HASH_NAME
    ticket: bytes = b""
    aggregated_commitment: list = field(default_factory=list)
    fired: bool = False

    def __post_init__(self):
        if not self.ticket:
            self.ticket = bytes(self.share_len)
        self._counted = set(self.aggregated_commitment)

    @property
    def count(self) -> int:
        return len(self.aggregated_commitment)

    def on_broadcast(self, gid_i, share_i: bytes) -> Optional[GroupHandoverRequest]:
        if gid_i != self.gid:
            return None
        if len(share_i) == self.share_len:
            idx = self.commitment_map.index(
                commitment(self.gid, self.rand, share_i, self.hash_name)
            )
            if idx is not None and idx not in self._counted:
                self.ticket = xor_aggregate(self.ticket, share_i)
                self.aggregated_commitment.append(idx)
                self._counted.add(idx)
        if not self.fired and self.count > self.threshold:
            self.fired = True
            return self.request()
        return None

    def request(self) -> GroupHandoverRequest:
        return GroupHandoverRequest(
            self.gid, self.ticket, tuple(self.aggregated_commitment)
        )


def ga_on_broadcast(state: GaState, gid_i, share_i: bytes):
    """Functional wrapper around :meth:`GaState.on_broadcast`."""
    req = state.on_broadcast(gid_i, share_i)
    return state, req


def verify_ticket(
    req: GroupHandoverRequest,
    csm: dict,
    cm: CommitmentMap,
    share_len: int = SHARE_BYTES,
) -> bool:
    shares = []
    for i in req.aggregated_commitment:
        if not 0 <= i < len(cm):
            return False
        share = csm.get(cm[i])
        if share is None:
            return False
        shares.append(share)
    if len(req.ticket) != share_len:
        return False
    return xor_all(shares, share_len) == req.ticket


def decide_threshold(connected: int, fraction: float = 0.5) -> int:
    """Largest count that must still be *exceeded* before a GA may fire."""
    if connected < 1:
        raise ValueError("connected must be >= 1")
    if not 0 < fraction < 1:
        raise ValueError("fraction must be in (0, 1)")
    return math.floor(fraction * connected)


def select_aggregators(members: Sequence, k: int, rng: random.Random) -> list:
    if not 1 <= k <= len(members):
        raise ValueError(f"cannot pick {k} aggregators from {len(members)} members")
    return rng.sample(list(members), k)


# ---------------------------------------------------------------------------
# signed notifications


class Action(enum.IntEnum):
    SWITCH = 0x01  # SwitchToGroupHandover
    CANCEL = 0x02  # CancelGroupHandover


class Verdict(str, enum.Enum):
    ACCEPT = "accept"
    BAD_SIGNATURE = "bad-signature"
    STALE = "stale-timestamp"
    REPLAY = "replay"


@dataclass(frozen=True)
class SatKeyPair:
    private: Ed25519PrivateKey
    public: Ed25519PublicKey

    @classmethod
    def generate(cls, rng: Optional[random.Random] = None) -> "SatKeyPair":
        if rng is None:
            sk = Ed25519PrivateKey.generate()
        else:
            sk = Ed25519PrivateKey.from_private_bytes(rng.randbytes(32))
        return cls(sk, sk.public_key())

    def sign(self, message: bytes) -> bytes:
        return self.private.sign(message)


@dataclass(frozen=True)
class Notification:
    ran_id: str
    gid: str
    action: Action
    timestamp: int  # ms
    signature: bytes
    # RAND is part of the signed nonce but never broadcast
    rand: bytes = field(default=b"", repr=False, compare=False)

    def key(self) -> tuple:
        return (self.ran_id, self.gid, int(self.action), self.timestamp)


def signed_payload(action: Action, ran_id, rand: bytes, gid, timestamp: int) -> bytes:
    """``action || nonce`` with nonce = RAN-ID || RAND || GID || TimeStamp."""
    return lp(bytes([int(action)]), ran_id, rand, gid, int(timestamp))


def make_notification(
    keys: SatKeyPair, ran_id, rand: bytes, gid, action: Action, timestamp
) -> Notification:
    ts = int(timestamp)
    sig = keys.sign(signed_payload(action, ran_id, rand, gid, ts))
    return Notification(ran_id, gid, Action(action), ts, sig, rand)


def verify_notification(
    pk: Ed25519PublicKey,
    notif: Notification,
    freshness_window_ms: float,
    now: float,
    seen: set,
    rand: Optional[bytes] = None,
) -> Verdict:
    """Check signature, freshness and replay; record accepted ones in ``seen``.

    ``rand`` is the epoch RAND known to group members; it defaults to the
    value carried alongside the notification object.
    """
    if not signature_valid(pk, notif, rand):
        return Verdict.BAD_SIGNATURE
    return check_fresh(notif, freshness_window_ms, now, seen)


def signature_valid(pk: Ed25519PublicKey, notif: Notification, rand: Optional[bytes] = None) -> bool:
    r = notif.rand if rand is None else rand
    try:
        pk.verify(
            notif.signature,
            signed_payload(notif.action, notif.ran_id, r, notif.gid, notif.timestamp),
        )
    except InvalidSignature:
        return False
    return True


def check_fresh(notif: Notification, freshness_window_ms: float, now: float, seen: set) -> Verdict:
    """Freshness and replay half of :func:`verify_notification`."""
    if abs(now - notif.timestamp) > freshness_window_ms:
        return Verdict.STALE
    k = notif.key()
    if k in seen:
        return Verdict.REPLAY
    seen.add(k)
    return Verdict.ACCEPT


# ---------------------------------------------------------------------------
# wire formats


def encode_share_broadcast(gid, share: bytes) -> bytes:
    return lp(gid) + bytes(share)


def decode_share_broadcast(buf: bytes, share_len: int = SHARE_BYTES):
    gid, off = _read_lp(buf, 0)
    share = buf[off:]
    if len(share) != share_len:
        raise ProtocolError("bad share length")
    return gid.decode("utf-8"), bytes(share)


def encode_group_request(
    req: GroupHandoverRequest, cm: Optional[CommitmentMap] = None, digest_mode=False
) -> bytes:
    """GID || ticket || count || entries.

    Entries are 4-byte indices by default, or the 32-byte commitment digests
    themselves in digest mode (needs ``cm``).
    """
    out = bytearray(lp(req.gid))
    out += req.ticket
    out += struct.pack(">I", len(req.aggregated_commitment))
    for i in req.aggregated_commitment:
        if digest_mode:
            out += cm[i]
        else:
            out += struct.pack(">I", i)
    return bytes(out)


def decode_group_request(
    buf: bytes,
    share_len: int = SHARE_BYTES,
    cm: Optional[CommitmentMap] = None,
    digest_mode=False,
) -> GroupHandoverRequest:
    gid, off = _read_lp(buf, 0)
    ticket = buf[off : off + share_len]
    off += share_len
    if len(ticket) != share_len or off + 4 > len(buf):
        raise ProtocolError("truncated group request")
    (count,) = struct.unpack_from(">I", buf, off)
    off += 4
    width = len(cm[0]) if digest_mode else 4
    if len(buf) - off != count * width:
        raise ProtocolError("group request entry count mismatch")
    idx = []
    for k in range(count):
        chunk = buf[off + k * width : off + (k + 1) * width]
        if digest_mode:
            i = cm.index(chunk)
            if i is None:
                raise ProtocolError("unknown commitment digest")
            idx.append(i)
        else:
            idx.append(struct.unpack(">I", chunk)[0])
    return GroupHandoverRequest(gid.decode("utf-8"), bytes(ticket), tuple(idx))


def encode_notification(n: Notification) -> bytes:
    return (
        lp(n.ran_id, n.gid)
        + bytes([int(n.action)])
        + struct.pack(">Q", n.timestamp)
        + n.signature
    )


def decode_notification(buf: bytes) -> Notification:
    ran_id, off = _read_lp(buf, 0)
    gid, off = _read_lp(buf, off)
    if len(buf) - off != 1 + 8 + SIGNATURE_BYTES:
        raise ProtocolError("bad notification length")
    action = Action(buf[off])
    (ts,) = struct.unpack_from(">Q", buf, off + 1)
    sig = bytes(buf[off + 9 :])
    return Notification(ran_id.decode("utf-8"), gid.decode("utf-8"), action, ts, sig)
