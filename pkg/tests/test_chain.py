import random

import pytest

from lachesis.chain import OperaChain
from lachesis.errors import (
    DuplicateEvent,
    MalformedReferences,
    MissingParent,
    UnknownEvent,
)
from lachesis.events import EventBlock, build_event
from lachesis.oracle import bfs_ancestors, naive_forks

from conftest import Net, random_honest_chain


def test_insert_leaf_into_empty_chain():
    chain = OperaChain(3, 2)
    leaf = build_event(0, None, ())
    chain.insert_event(leaf)
    assert len(chain) == 1
    assert chain.heads[0] == leaf.id
    assert leaf.id in chain.leaf_set


def test_missing_parent_rejected():
    chain = OperaChain(3, 2)
    leaf0 = build_event(0, None, ())
    ghost = build_event(1, None, ())
    chain.insert_event(leaf0)
    orphan = build_event(0, leaf0, [ghost])
    with pytest.raises(MissingParent):
        chain.insert_event(orphan)


def test_duplicate_rejected():
    chain = OperaChain(3, 2)
    leaf = build_event(0, None, ())
    chain.insert_event(leaf)
    with pytest.raises(DuplicateEvent):
        chain.insert_event(leaf)


def test_malformed_reference_count():
    chain = OperaChain(4, 3)
    leaves = [build_event(i, None, ()) for i in range(3)]
    for leaf in leaves:
        chain.insert_event(leaf)
    short = build_event(0, leaves[0], [leaves[1]])  # needs k-1 = 2 others
    with pytest.raises(MalformedReferences):
        chain.insert_event(short)


def test_malformed_duplicate_peer():
    chain = OperaChain(4, 3)
    l0 = build_event(0, None, ())
    l1 = build_event(1, None, ())
    l2 = build_event(2, None, ())
    for leaf in (l0, l1, l2):
        chain.insert_event(leaf)
    n1 = build_event(1, l1, [l0, l2])
    chain.insert_event(n1)
    # references node 1 twice (its top and its leaf)
    bad = build_event(0, l0, [n1, l1])
    with pytest.raises(MalformedReferences):
        chain.insert_event(bad)


def test_malformed_self_parent_creator():
    chain = OperaChain(3, 2)
    l0 = build_event(0, None, ())
    l1 = build_event(1, None, ())
    chain.insert_event(l0)
    chain.insert_event(l1)
    wrong = build_event(0, l1, [l0])  # self-parent belongs to node 1
    with pytest.raises(MalformedReferences):
        chain.insert_event(wrong)


def test_malformed_id_rejected():
    chain = OperaChain(3, 2)
    l0 = build_event(0, None, ())
    good = build_event(1, None, ())
    forged = EventBlock(
        id=l0.id,  # wrong digest for this content
        creator=1,
        self_parent=None,
        other_parents=(),
        lamport_ts=0,
        seq=0,
    )
    chain.insert_event(good)
    with pytest.raises(MalformedReferences):
        chain.insert_event(forged)


def test_lamport_must_exceed_parents():
    chain = OperaChain(3, 2)
    l0 = build_event(0, None, ())
    l1 = build_event(1, None, ())
    chain.insert_event(l0)
    chain.insert_event(l1)
    from lachesis.events import event_id

    stale = EventBlock(
        id=event_id(0, 1, l0.id, (l1.id,), 0, b""),
        creator=0,
        self_parent=l0.id,
        other_parents=(l1.id,),
        lamport_ts=0,
        seq=1,
    )
    with pytest.raises(MalformedReferences):
        chain.insert_event(stale)


def test_five_node_bootstrap_replay():
    # Five nodes create leaves; node A links a1 to B's and C's leaves; then
    # node B creates b1 referencing a1 and D's leaf.  b1's parent set must
    # come out as {b-leaf, a1, d-leaf}.
    net = Net(5, 3)
    leaves = net.add_leaves()
    a1 = net.event(0, [1, 2])
    b1 = net.event(1, [a1, leaves[3]])
    assert set(b1.parents) == {leaves[1].id, a1.id, leaves[3].id}
    assert net.chain.heads[1] == b1.id


def test_happened_before_strict():
    chain = random_honest_chain(4, 3, 20, seed=1)
    some = next(iter(chain.events))
    assert not chain.happened_before(some, some)


def test_happened_before_self_chain():
    net = Net(3, 2)
    leaves = net.add_leaves()
    e1 = net.event(0, [1])
    e2 = net.event(0, [2])
    assert net.chain.happened_before(leaves[0].id, e1.id)
    assert net.chain.happened_before(leaves[0].id, e2.id)
    assert net.chain.happened_before(e1.id, e2.id)
    assert not net.chain.happened_before(e2.id, e1.id)


def test_unknown_event_raises():
    chain = OperaChain(2, 2)
    leaf = build_event(0, None, ())
    chain.insert_event(leaf)
    ghost = build_event(1, None, ())
    with pytest.raises(UnknownEvent):
        chain.happened_before(leaf.id, ghost.id)
    with pytest.raises(UnknownEvent):
        chain.subgraph(ghost.id)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_happened_before_matches_bfs_oracle(seed):
    chain = random_honest_chain(5, 3, 30, seed=seed)
    ids = list(chain.events)
    for x in ids:
        ancestors = bfs_ancestors(chain, x)
        for y in ids:
            assert chain.happened_before(y, x) == (y in ancestors)


def test_happened_before_oracle_at_scale():
    chain = random_honest_chain(6, 3, 200 - 6, seed=7)
    assert len(chain) == 200
    rng = random.Random(11)
    ids = list(chain.events)
    for x in rng.sample(ids, 40):
        ancestors = bfs_ancestors(chain, x)
        for y in ids:
            assert chain.happened_before(y, x) == (y in ancestors)


def test_concurrent_leaves():
    net = Net(3, 2)
    leaves = net.add_leaves()
    assert net.chain.concurrent(leaves[0].id, leaves[1].id)


def test_concurrent_excludes_self_parent():
    net = Net(3, 2)
    net.add_leaves()
    e1 = net.event(0, [1])
    assert not net.chain.concurrent(net.tops[0].id, e1.self_parent)


def test_concurrent_matches_oracle():
    chain = random_honest_chain(4, 3, 40, seed=3)
    ids = list(chain.events)
    for x in ids[::3]:
        for y in ids[::5]:
            expected = (
                x != y
                and x not in bfs_ancestors(chain, y)
                and y not in bfs_ancestors(chain, x)
            )
            assert chain.concurrent(x, y) == expected


def test_detect_forks_honest_empty():
    chain = random_honest_chain(5, 3, 60, seed=5)
    for creator in range(5):
        assert chain.detect_forks(creator) == []
    assert chain.forked_creators() == set()


def test_detect_forks_single_pair():
    net = Net(4, 3)
    net.add_leaves()
    for _ in range(2):
        net.event(3, [0, 1])
    head = net.tops[3]
    peers = [net.tops[0], net.tops[1]]
    vx = build_event(3, head, peers, b"x")
    vy = build_event(3, head, peers, b"y")
    net.insert(vx)
    net.insert(vy)
    pairs = net.chain.detect_forks(3)
    assert pairs == [tuple(sorted((vx.id, vy.id)))]
    assert net.chain.first_fork_seq(3) == vx.seq


def test_detect_forks_three_way():
    net = Net(4, 3)
    net.add_leaves()
    head = net.tops[2]
    peers = [net.tops[0], net.tops[1]]
    children = [build_event(2, head, peers, bytes([i])) for i in range(3)]
    for child in children:
        net.insert(child)
    pairs = net.chain.detect_forks(2)
    assert len(pairs) == 3
    assert pairs == naive_forks(net.chain, 2)


def test_detect_forks_matches_oracle_on_branches():
    net = Net(4, 3)
    net.add_leaves()
    rng = random.Random(2)
    for step in range(10):
        creator = rng.randrange(4)
        others = rng.sample([j for j in range(4) if j != creator], 2)
        net.event(creator, others, payload=step.to_bytes(2, "big"))
    # two extra branch points for creator 1
    for _ in range(2):
        head = net.chain.get(net.chain.events_by(1)[-2])
        peers = [net.tops[0], net.tops[2]]
        net.insert(build_event(1, head, peers, bytes([rng.randrange(255)])))
    for creator in range(4):
        assert net.chain.detect_forks(creator) == naive_forks(net.chain, creator)


def test_subgraph_leaf():
    net = Net(3, 2)
    leaves = net.add_leaves()
    sub = net.chain.subgraph(leaves[0].id)
    assert len(sub) == 1


def test_subgraph_counts_match_bfs():
    chain = random_honest_chain(5, 3, 50, seed=4)
    for eid in list(chain.events)[::4]:
        sub = chain.subgraph(eid)
        assert len(sub) == len(bfs_ancestors(chain, eid)) + 1


def test_subgraph_of_head_covers_connected_chain():
    from conftest import full_mesh

    net = full_mesh(4, 3)
    head = net.chain.heads[0]
    sub = net.chain.subgraph(head)
    # every event except the other creators' last-round tips is an ancestor
    assert len(sub) == len(net.chain) - 3


def test_acyclic_lamport_strictly_decreasing():
    chain = random_honest_chain(5, 3, 80, seed=6)
    for ev in chain.in_insertion_order():
        for pid in ev.parents:
            assert chain.get(pid).lamport_ts < ev.lamport_ts


def test_closure_all_parents_present():
    chain = random_honest_chain(5, 3, 80, seed=8)
    for ev in chain.in_insertion_order():
        for pid in ev.parents:
            assert pid in chain


def test_interleaving_consistency():
    # Two chains fed the same events in different valid orders must agree
    # on every shared subgraph.
    base = random_honest_chain(4, 3, 40, seed=10)
    events = base.in_insertion_order()
    alt = OperaChain(4, 3)
    rng = random.Random(99)
    pending = list(events)
    inserted = set()
    while pending:
        rng.shuffle(pending)
        progressed = False
        rest = []
        for ev in pending:
            if all(p in inserted for p in ev.parents):
                alt.insert_event(ev)
                inserted.add(ev.id)
                progressed = True
            else:
                rest.append(ev)
        pending = rest
        assert progressed
    assert set(alt.events) == set(base.events)
    for eid in list(base.events)[::5]:
        assert set(base.subgraph(eid).events) == set(alt.subgraph(eid).events)
