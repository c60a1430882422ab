"""Event log serialization: length-prefixed binary records and JSON lines.

A binary record carries the canonical fields plus the raw payload and
signature, so a chain can be rebuilt from the log alone; ids are
recomputed and checked on read.  The JSON-lines form mirrors the event
fields with digests hex-encoded and exists for debugging and tooling.
"""

from __future__ import annotations

import json
from typing import Iterable

from .events import (
    DIGEST_SIZE,
    ZERO_DIGEST,
    EventBlock,
    EventId,
    decode_varint,
    encode_varint,
    event_id,
)


def _lp(data: bytes) -> bytes:
    return encode_varint(len(data)) + data


def _read_lp(buf: bytes, offset: int) -> tuple[bytes, int]:
    length, offset = decode_varint(buf, offset)
    end = offset + length
    if end > len(buf):
        raise ValueError("truncated record field")
    return buf[offset:end], end


def encode_event_record(ev: EventBlock) -> bytes:
    body = b"".join(
        (
            _lp(encode_varint(ev.creator)),
            _lp(encode_varint(ev.seq)),
            _lp(ev.self_parent if ev.self_parent is not None else ZERO_DIGEST),
            _lp(b"".join(ev.other_parents)),
            _lp(encode_varint(ev.lamport_ts)),
            _lp(ev.payload),
            _lp(ev.signature),
        )
    )
    return _lp(body)


def decode_event_record(buf: bytes, offset: int = 0) -> tuple[EventBlock, int]:
    body, offset = _read_lp(buf, offset)
    pos = 0
    raw, pos = _read_lp(body, pos)
    creator, _ = decode_varint(raw)
    raw, pos = _read_lp(body, pos)
    seq, _ = decode_varint(raw)
    self_raw, pos = _read_lp(body, pos)
    self_parent: EventId | None = None if self_raw == ZERO_DIGEST else self_raw
    others_raw, pos = _read_lp(body, pos)
    if len(others_raw) % DIGEST_SIZE:
        raise ValueError("other-parent block not digest aligned")
    others = tuple(
        others_raw[i : i + DIGEST_SIZE] for i in range(0, len(others_raw), DIGEST_SIZE)
    )
    raw, pos = _read_lp(body, pos)
    lamport, _ = decode_varint(raw)
    payload, pos = _read_lp(body, pos)
    signature, pos = _read_lp(body, pos)
    eid = event_id(creator, seq, self_parent, others, lamport, payload)
    ev = EventBlock(
        id=eid,
        creator=creator,
        self_parent=self_parent,
        other_parents=others,
        lamport_ts=lamport,
        seq=seq,
        payload=payload,
        signature=signature,
    )
    return ev, offset


def write_event_log(events: Iterable[EventBlock], path) -> None:
    with open(path, "wb") as fh:
        for ev in events:
            fh.write(encode_event_record(ev))


def read_event_log(path) -> list[EventBlock]:
    with open(path, "rb") as fh:
        buf = fh.read()
    events = []
    offset = 0
    while offset < len(buf):
        ev, offset = decode_event_record(buf, offset)
        events.append(ev)
    return events


def event_to_json(ev: EventBlock) -> dict:
    return {
        "id": ev.id.hex(),
        "creator": ev.creator,
        "seq": ev.seq,
        "self_parent": ev.self_parent.hex() if ev.self_parent is not None else None,
        "other_parents": [p.hex() for p in ev.other_parents],
        "lamport_ts": ev.lamport_ts,
        "payload": ev.payload.hex(),
        "signature": ev.signature.hex(),
    }


def event_from_json(obj: dict) -> EventBlock:
    self_parent = bytes.fromhex(obj["self_parent"]) if obj["self_parent"] else None
    return EventBlock(
        id=bytes.fromhex(obj["id"]),
        creator=obj["creator"],
        self_parent=self_parent,
        other_parents=tuple(bytes.fromhex(p) for p in obj["other_parents"]),
        lamport_ts=obj["lamport_ts"],
        seq=obj["seq"],
        payload=bytes.fromhex(obj["payload"]),
        signature=bytes.fromhex(obj["signature"]),
    )


def write_jsonl_log(events: Iterable[EventBlock], path) -> None:
    with open(path, "w") as fh:
        for ev in events:
            fh.write(json.dumps(event_to_json(ev), sort_keys=True) + "\n")


def read_jsonl_log(path) -> list[EventBlock]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(event_from_json(json.loads(line)))
    return out
