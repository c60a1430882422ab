import pytest
from hypothesis import given, strategies as st

from lachesis.events import (
    ZERO_DIGEST,
    assign_lamport,
    build_event,
    canonical_encoding,
    decode_varint,
    encode_varint,
    event_id,
)


@given(st.integers(min_value=0, max_value=2**63 - 1))
def test_varint_round_trip(value):
    buf = encode_varint(value)
    decoded, offset = decode_varint(buf)
    assert decoded == value
    assert offset == len(buf)


def test_varint_rejects_negative():
    with pytest.raises(ValueError):
        encode_varint(-1)


def test_assign_lamport_leaf():
    assert assign_lamport([]) == 0


def test_assign_lamport_max_plus_one():
    assert assign_lamport([3, 5, 4]) == 6


def test_lamport_grid_replay():
    # Three processes, hand-computed logical clocks:
    # leaves at 0; e1 = P0(L0, L1) -> 1; e2 = P1(L1, L2) -> 1;
    # e3 = P2(L2, e2) -> 2; e4 = P0(e1, e3) -> 3; e5 = P1(e2, e4) -> 4.
    l0 = build_event(0, None, ())
    l1 = build_event(1, None, ())
    l2 = build_event(2, None, ())
    e1 = build_event(0, l0, [l1])
    e2 = build_event(1, l1, [l2])
    e3 = build_event(2, l2, [e2])
    e4 = build_event(0, e1, [e3])
    e5 = build_event(1, e2, [e4])
    stamps = [ev.lamport_ts for ev in (l0, l1, l2, e1, e2, e3, e4, e5)]
    assert stamps == [0, 0, 0, 1, 1, 2, 3, 4]


def test_leaf_shape():
    leaf = build_event(2, None, (), payload=b"boot")
    assert leaf.is_leaf
    assert leaf.seq == 0
    assert leaf.lamport_ts == 0
    assert leaf.other_parents == ()
    assert leaf.id == event_id(2, 0, None, (), 0, b"boot")


def test_id_covers_content():
    a = event_id(0, 1, ZERO_DIGEST, (), 2, b"x")
    b = event_id(0, 1, ZERO_DIGEST, (), 2, b"y")
    c = event_id(0, 1, ZERO_DIGEST, (), 2, b"x")
    assert a != b
    assert a == c


def test_id_independent_of_other_parent_order():
    p1 = b"\x01" * 32
    p2 = b"\x02" * 32
    sp = b"\x03" * 32
    assert event_id(1, 4, sp, (p1, p2), 9, b"") == event_id(1, 4, sp, (p2, p1), 9, b"")


def test_signature_not_in_id():
    l0 = build_event(0, None, (), signature=b"sig-one")
    l1 = build_event(0, None, (), signature=b"sig-two")
    assert l0.id == l1.id


def test_canonical_encoding_deterministic():
    enc1 = canonical_encoding(3, 7, None, (b"\x05" * 32,), 11, b"data")
    enc2 = canonical_encoding(3, 7, None, (b"\x05" * 32,), 11, b"data")
    assert enc1 == enc2


def test_build_event_chains_seq():
    leaf = build_event(1, None, ())
    other = build_event(0, None, ())
    nxt = build_event(1, leaf, [other])
    assert nxt.seq == 1
    assert nxt.self_parent == leaf.id
    assert nxt.lamport_ts == 1
    assert not nxt.is_leaf


def test_leaf_with_references_rejected():
    other = build_event(0, None, ())
    with pytest.raises(ValueError):
        build_event(1, None, [other])
