"""Node-local bookkeeping, cost-based peer selection and the sync protocol.

Each node tracks, per creator: how many events it has seen (height), how
many edges land on that creator's current top event (in-degree) and the
highest seq it knows (the map exchanged during sync).  Peer choice
minimizes the cost ratio in-degree / height, compared exactly so that
float rounding can never reorder a tie.

Sync is a two-message exchange: the requester sends its known map, the
responder answers with every event the requester lacks, in topological
order, plus its own known map.  For creators with a detected fork the
responder sends its full inventory for that creator, since a max-seq map
cannot describe branches.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd

from .chain import OperaChain
from .errors import InsufficientPeers, StaleTops
from .events import EventBlock, EventId, build_event, decode_varint, encode_varint
from .eventlog import decode_event_record, encode_event_record, event_from_json, event_to_json

INFINITE_COST = float("inf")


@dataclass(slots=True)
class NodeBook:
    """Height / in-degree / known-seq vectors for one node's local view."""

    n: int
    height: dict[int, int] = field(default_factory=dict)
    in_degree: dict[int, int] = field(default_factory=dict)
    known: dict[int, int] = field(default_factory=dict)
    tops: dict[int, EventId] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for i in range(self.n):
            self.height.setdefault(i, 0)
            self.in_degree.setdefault(i, 0)


def observe_event(book: NodeBook, chain: OperaChain, ev: EventBlock) -> None:
    """Account for one event entering the local view.

    The creator's in-degree counter restarts for its new top, parent
    references are counted against the tops tracked before this event,
    then the creator's top advances.  Parent creators are resolved
    through the chain, which already holds every referenced parent.
    """
    book.in_degree[ev.creator] = 0
    for pid in ev.parents:
        pcreator = chain.get(pid).creator
        if book.tops.get(pcreator) == pid:
            book.in_degree[pcreator] = book.in_degree.get(pcreator, 0) + 1
    book.height[ev.creator] = book.height.get(ev.creator, 0) + 1
    if ev.seq > book.known.get(ev.creator, -1):
        book.known[ev.creator] = ev.seq
    book.tops[ev.creator] = ev.id


def cost(i_degree: int, height: int) -> Fraction | float:
    """Peer cost ratio I/H as an exact rational; +inf for zero height."""
    if height == 0:
        return INFINITE_COST
    return Fraction(i_degree, height)


def select_peers(
    book: NodeBook, self_id: int, k: int, rng: random.Random,
    exclude: set[int] = frozenset(),
) -> set[int]:
    """Pick k-1 partners with the lowest cost, ties broken uniformly.

    When the cheapest tier cannot fill all slots, the remainder comes from
    the next tiers in cost order.  ``exclude`` removes peers that are
    currently unavailable (mid-sync) before the tiers are formed.
    """
    others = [i for i in range(book.n) if i != self_id and i not in exclude]
    need = k - 1
    if len(others) < need:
        raise InsufficientPeers(f"need {need} peers, know {len(others)}")
    # Tier keys are gcd-normalized (in-degree, height) pairs: exact
    # rational grouping without constructing a Fraction per node.
    tiers: dict[tuple[int, int], list[int]] = {}
    for i in others:
        i_deg = book.in_degree.get(i, 0)
        height = book.height.get(i, 0)
        if height == 0:
            key = (1, 0)  # infinite cost
        else:
            g = gcd(i_deg, height) or 1
            key = (i_deg // g, height // g)
        tiers.setdefault(key, []).append(i)
    chosen: set[int] = set()
    ordered = sorted(
        tiers, key=lambda key: INFINITE_COST if key[1] == 0 else Fraction(*key)
    )
    for key in ordered:
        tier = sorted(tiers[key])
        if len(tier) <= need:
            chosen.update(tier)
            need -= len(tier)
        else:
            chosen.update(rng.sample(tier, need))
            need = 0
        if need == 0:
            break
    return chosen


def create_event(
    chain: OperaChain,
    book: NodeBook,
    self_id: int,
    peer_tops: list[EventId],
    payload: bytes = b"",
    signature: bytes = b"",
) -> EventBlock:
    """Create (but do not insert) the node's next event block.

    References the node's own head plus the given peer tops.  Raises
    StaleTops when a referenced top is no longer its creator's top in the
    local chain, in which case the caller should re-sync and retry.
    """
    head_id = chain.top_event(self_id)
    if head_id is None:
        if peer_tops:
            raise StaleTops("leaf creation must not reference peers")
        return build_event(self_id, None, (), payload, signature)
    for pid in peer_tops:
        creator = chain.get(pid).creator
        if chain.top_event(creator) != pid:
            raise StaleTops(pid.hex())
    head = chain.get(head_id)
    others = [chain.get(pid) for pid in peer_tops]
    return build_event(self_id, head, others, payload, signature)


def event_diff(
    local_known: dict[int, int],
    remote_known: dict[int, int],
    chain: OperaChain,
) -> list[EventBlock]:
    """Events the remote side lacks, parents before children.

    Honest creators are diffed by max seq.  For creators with a locally
    detected fork every stored event is included, so fork evidence keeps
    spreading even when the seq ranges overlap.
    """
    forked = chain.forked_creators()
    out: list[EventBlock] = []
    for creator in range(chain.n):
        ids = chain.events_by(creator)
        if not ids:
            continue
        if creator in forked:
            out.extend(chain.get(eid) for eid in ids)
        else:
            # Honest creators are linear, so seq equals list position.
            start = remote_known.get(creator, -1) + 1
            out.extend(chain.get(eid) for eid in ids[start:])
    out.sort(key=lambda e: (e.lamport_ts, e.id))
    return out


@dataclass(slots=True)
class SyncMessage:
    """One half of a sync exchange; the wire form is canonical binary."""

    kind: str  # "request" | "response"
    sender: int
    receiver: int
    known_snapshot: dict[int, int] = field(default_factory=dict)
    events: list[EventBlock] = field(default_factory=list)

    def encode(self) -> bytes:
        out = bytearray()
        out.append(0 if self.kind == "request" else 1)
        out += encode_varint(self.sender)
        out += encode_varint(self.receiver)
        out += encode_varint(len(self.known_snapshot))
        for creator in sorted(self.known_snapshot):
            out += encode_varint(creator)
            out += encode_varint(self.known_snapshot[creator])
        out += encode_varint(len(self.events))
        for ev in self.events:
            out += encode_event_record(ev)
        return bytes(out)

    @classmethod
    def decode(cls, buf: bytes) -> "SyncMessage":
        kind = "request" if buf[0] == 0 else "response"
        offset = 1
        sender, offset = decode_varint(buf, offset)
        receiver, offset = decode_varint(buf, offset)
        count, offset = decode_varint(buf, offset)
        known = {}
        for _ in range(count):
            creator, offset = decode_varint(buf, offset)
            seq, offset = decode_varint(buf, offset)
            known[creator] = seq
        count, offset = decode_varint(buf, offset)
        events = []
        for _ in range(count):
            ev, offset = decode_event_record(buf, offset)
            events.append(ev)
        return cls(kind, sender, receiver, known, events)

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "sender": self.sender,
                "receiver": self.receiver,
                "known": {str(c): s for c, s in sorted(self.known_snapshot.items())},
                "events": [event_to_json(ev) for ev in self.events],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "SyncMessage":
        obj = json.loads(text)
        return cls(
            kind=obj["kind"],
            sender=obj["sender"],
            receiver=obj["receiver"],
            known_snapshot={int(c): s for c, s in obj["known"].items()},
            events=[event_from_json(e) for e in obj["events"]],
        )


def learn_heights(book: NodeBook, known_map: dict[int, int]) -> None:
    """Raise height estimates from a peer's known map.

    Heights only steer the cost function; the known map itself always
    reflects the local chain, so sync completeness is unaffected.  Without
    this, a node nobody pulls from would keep a tiny height everywhere,
    stay expensive, and never be selected at all.
    """
    for creator, seq in known_map.items():
        if seq + 1 > book.height.get(creator, 0):
            book.height[creator] = seq + 1


def handle_sync(request: SyncMessage, chain: OperaChain, book: NodeBook) -> SyncMessage:
    """Answer a sync request with the diff and our own known map."""
    if request.kind != "request":
        raise ValueError("handle_sync expects a request message")
    learn_heights(book, request.known_snapshot)
    events = event_diff(dict(book.known), request.known_snapshot, chain)
    return SyncMessage(
        kind="response",
        sender=request.receiver,
        receiver=request.sender,
        known_snapshot=dict(book.known),
        events=events,
    )
