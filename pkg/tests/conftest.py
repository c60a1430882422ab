"""Shared builders for chain and consensus fixtures."""

import random

import pytest

from lachesis.chain import OperaChain
from lachesis.consensus import FrameLedger, process_event
from lachesis.events import EventBlock, build_event


class Net:
    """Convenience wrapper: one chain plus its consensus ledger."""

    def __init__(self, n, k, h=10):
        self.n = n
        self.k = k
        self.chain = OperaChain(n, k)
        self.ledger = FrameLedger(n, k, h)
        self.tops = {}

    def insert(self, ev: EventBlock):
        self.chain.insert_event(ev)
        process_event(self.ledger, self.chain, ev)
        self.tops[ev.creator] = ev
        return ev

    def leaf(self, creator, payload=b""):
        return self.insert(build_event(creator, None, (), payload or bytes([creator])))

    def event(self, creator, others, payload=b""):
        """Create an event referencing the creator's top plus other blocks."""
        head = self.tops[creator]
        other_blocks = [o if isinstance(o, EventBlock) else self.tops[o] for o in others]
        return self.insert(build_event(creator, head, other_blocks, payload))

    def add_leaves(self):
        return [self.leaf(i) for i in range(self.n)]


@pytest.fixture
def net5():
    net = Net(5, 3)
    net.add_leaves()
    return net


def full_mesh(n, rounds, h=10):
    """Everyone references everyone's previous-round event: one frame per
    round, uniform lamports, the textbook fully-connected topology."""
    net = Net(n, n, h)
    prev = net.add_leaves()
    for _ in range(rounds):
        current = []
        for i in range(n):
            others = [prev[j] for j in range(n) if j != i]
            current.append(net.insert(build_event(i, prev[i], others, b"")))
        prev = current
    return net


def random_honest_net(n, k, events, seed, h=10):
    """Random gossip-shaped DAG: each new event references its creator's
    top plus k-1 random distinct other tops."""
    rng = random.Random(seed)
    net = Net(n, k, h)
    net.add_leaves()
    for step in range(events):
        creator = rng.randrange(n)
        others = rng.sample([j for j in range(n) if j != creator], k - 1)
        net.event(creator, others, payload=step.to_bytes(4, "big"))
    return net


def random_honest_chain(n, k, events, seed):
    return random_honest_net(n, k, events, seed).chain


def forked_chain(n=4, k=3, fork_creator=3, seed=9):
    """Honest chain plus one creator with a two-branch fork."""
    rng = random.Random(seed)
    net = Net(n, k)
    net.add_leaves()
    for step in range(8):
        creator = rng.randrange(n)
        others = rng.sample([j for j in range(n) if j != creator], k - 1)
        net.event(creator, others, payload=step.to_bytes(2, "big"))
    head = net.tops[fork_creator]
    peers = [net.tops[j] for j in range(n) if j != fork_creator][: k - 1]
    branch_a = build_event(fork_creator, head, peers, b"branch-a")
    branch_b = build_event(fork_creator, head, peers, b"branch-b")
    net.insert(branch_a)
    net.insert(branch_b)
    return net, (branch_a, branch_b)
