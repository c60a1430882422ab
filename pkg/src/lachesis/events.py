"""Event blocks and their canonical binary encoding.

The OPERA chain is content-addressed: an event block is identified by the
SHA-256 digest of its canonical encoding, so the same block gets the same
id on every node regardless of arrival order.  The canonical encoding is a
length-prefixed concatenation of (creator, seq, self-parent digest or a
zero block, sorted other-parent digests, lamport timestamp, payload
digest).  Signatures are carried opaquely and never enter the id.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

DIGEST_SIZE = 32
ZERO_DIGEST = b"\x00" * DIGEST_SIZE
HASH_NAME = "sha256"

# 32-byte content digest of the canonical encoding.
EventId = bytes


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def encode_varint(value: int) -> bytes:
    """Unsigned LEB128."""
    if value < 0:
        raise ValueError("varint is unsigned")
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def decode_varint(buf: bytes, offset: int = 0) -> tuple[int, int]:
    """Decode an unsigned LEB128 integer, returning (value, next offset)."""
    result = 0
    shift = 0
    while True:
        if offset >= len(buf):
            raise ValueError("truncated varint")
        byte = buf[offset]
        offset += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, offset
        shift += 7
        if shift > 63:
            raise ValueError("varint too long")


def _lp(data: bytes) -> bytes:
    return encode_varint(len(data)) + data


def _read_lp(buf: bytes, offset: int) -> tuple[bytes, int]:
    length, offset = decode_varint(buf, offset)
    end = offset + length
    if end > len(buf):
        raise ValueError("truncated field")
    return buf[offset:end], end


def assign_lamport(parent_timestamps: list[int]) -> int:
    """Logical time for a new event: 0 for a leaf, else max(parents) + 1."""
    if not parent_timestamps:
        return 0
    return max(parent_timestamps) + 1


def canonical_encoding(
    creator: int,
    seq: int,
    self_parent: EventId | None,
    other_parents: tuple[EventId, ...],
    lamport_ts: int,
    payload: bytes,
) -> bytes:
    """Canonical byte string whose SHA-256 digest is the event id."""
    parts = [
        _lp(encode_varint(creator)),
        _lp(encode_varint(seq)),
        _lp(self_parent if self_parent is not None else ZERO_DIGEST),
        _lp(b"".join(sorted(other_parents))),
        _lp(encode_varint(lamport_ts)),
        _lp(digest(payload)),
    ]
    return b"".join(parts)


def event_id(
    creator: int,
    seq: int,
    self_parent: EventId | None,
    other_parents: tuple[EventId, ...],
    lamport_ts: int,
    payload: bytes,
) -> EventId:
    return digest(
        canonical_encoding(creator, seq, self_parent, other_parents, lamport_ts, payload)
    )


@dataclass(frozen=True, slots=True)
class EventBlock:
    """One vertex of the OPERA chain.

    A non-leaf block carries exactly one self-parent plus k-1 references to
    other creators' top events; a leaf (a creator's first block) carries no
    references at all.  ``lamport_ts`` is strictly greater than every
    parent's timestamp, and ``seq`` counts the block's position on its
    creator's self-parent chain.
    """

    id: EventId
    creator: int
    self_parent: EventId | None
    other_parents: tuple[EventId, ...]
    lamport_ts: int
    seq: int
    payload: bytes = b""
    signature: bytes = field(default=b"", compare=False)

    @property
    def is_leaf(self) -> bool:
        return self.self_parent is None

    @property
    def parents(self) -> tuple[EventId, ...]:
        if self.self_parent is None:
            return self.other_parents
        return (self.self_parent,) + self.other_parents

    def short_id(self) -> str:
        return self.id.hex()[:8]


def build_event(
    creator: int,
    self_parent: EventBlock | None,
    other_parents: list[EventBlock] | tuple[EventBlock, ...] = (),
    payload: bytes = b"",
    signature: bytes = b"",
) -> EventBlock:
    """Assemble a block from its parent blocks, deriving seq, lamport and id."""
    if self_parent is None and other_parents:
        raise ValueError("a leaf event carries no references")
    others = tuple(p.id for p in other_parents)
    seq = 0 if self_parent is None else self_parent.seq + 1
    stamps = [p.lamport_ts for p in other_parents]
    if self_parent is not None:
        stamps.append(self_parent.lamport_ts)
    lamport = assign_lamport(stamps)
    self_id = None if self_parent is None else self_parent.id
    eid = event_id(creator, seq, self_id, others, lamport, payload)
    return EventBlock(
        id=eid,
        creator=creator,
        self_parent=self_id,
        other_parents=others,
        lamport_ts=lamport,
        seq=seq,
        payload=payload,
        signature=signature,
    )
