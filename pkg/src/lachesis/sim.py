"""Deterministic multi-node simulator for the consensus protocol.

Time is a discrete tick counter.  Every node runs the main loop (pick
peers by cost, sync, create an event, update roots / Clothos / Atropos)
as an asynchronous state machine driven by a single message queue whose
delivery order is the total order (tick, sender, receiver, seq).  All
randomness comes from per-node generators derived from (seed, node id),
so a config maps to exactly one trace.

Byzantine behaviors: ``silent`` nodes never act, ``fork_once`` /
``fork_every(m)`` nodes create two children of one self-parent and gossip
each branch to disjoint peer subsets, then keep extending their branches
alternately.  Honest nodes recover from the resulting gaps by buffering
orphans and falling back to a full pull while any orphan is outstanding.

After the workload target is reached the run drains: nodes keep gossiping
and creating empty events until every workload event is finalized
everywhere, then direct settle sweeps bring all honest chains to an
identical quiescent state.  The audit cross-checks every pair of honest
nodes and runs on an insertion stride plus once at quiescence.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import random
from dataclasses import dataclass, field
from typing import Callable

from .chain import OperaChain
from .consensus import (
    FrameLedger,
    RootStatus,
    finalize_order,
    process_event,
)
from .errors import ConfigInvalid, InsufficientPeers
from .events import EventBlock, EventId, build_event
from .peering import (
    NodeBook,
    SyncMessage,
    create_event,
    handle_sync,
    learn_heights,
    observe_event,
    select_peers,
)

HONEST = "honest"
SILENT = "silent"
FORK_ONCE = "fork_once"
FORK_EVERY = "fork_every"

_BEHAVIORS = (SILENT, FORK_ONCE, FORK_EVERY)


@dataclass(slots=True)
class Adversary:
    node: int
    behavior: str
    param: int = 0  # fork_every period, or the seq at which fork_once fires

    def to_dict(self) -> dict:
        return {"node": self.node, "behavior": self.behavior, "param": self.param}


@dataclass
class SimConfig:
    n: int
    k: int = 3
    h: int = 10
    seed: int = 0
    target_events: int | None = None
    rounds: int | None = None
    latency: dict = field(default_factory=lambda: {"kind": "fixed", "value": 1})
    adversaries: list[Adversary] = field(default_factory=list)
    payload_bytes: int = 8
    allow_unsafe: bool = False
    audit_interval: int | None = None
    drain: bool = True
    drain_frame_cap: int = 30
    sync_timeout: int = 20
    wake_period: int = 0  # 0: derive from latency
    broadcast: bool = False

    def effective_wake_period(self) -> int:
        """Iteration cadence; decoupled from sync latency so that fast
        responders cannot crowd out slower nodes' peer choices."""
        if self.wake_period > 0:
            return self.wake_period
        if self.latency.get("kind") == "fixed":
            return 2 * self.latency["value"] + 2
        return self.latency["hi"] + self.latency["lo"] + 2

    def validate(self) -> None:
        if self.n < 2:
            raise ConfigInvalid("need at least two nodes")
        if not 2 <= self.k <= self.n:
            raise ConfigInvalid("k must satisfy 2 <= k <= n")
        if self.h < 1:
            raise ConfigInvalid("h must be positive")
        if (self.target_events is None) == (self.rounds is None):
            raise ConfigInvalid("exactly one of target_events / rounds must be set")
        if self.target_events is not None and self.target_events < self.n:
            raise ConfigInvalid("target_events must cover at least the leaves")
        if self.rounds is not None and self.rounds < 1:
            raise ConfigInvalid("rounds must be positive")
        kind = self.latency.get("kind")
        if kind == "fixed":
            if self.latency.get("value", 0) < 1:
                raise ConfigInvalid("fixed latency must be >= 1 tick")
        elif kind == "uniform":
            lo, hi = self.latency.get("lo", 0), self.latency.get("hi", 0)
            if not 1 <= lo <= hi:
                raise ConfigInvalid("uniform latency needs 1 <= lo <= hi")
        else:
            raise ConfigInvalid(f"unknown latency kind {kind!r}")
        seen = set()
        for adv in self.adversaries:
            if not 0 <= adv.node < self.n:
                raise ConfigInvalid(f"adversary node {adv.node} out of range")
            if adv.node in seen:
                raise ConfigInvalid(f"duplicate adversary node {adv.node}")
            seen.add(adv.node)
            if adv.behavior not in _BEHAVIORS:
                raise ConfigInvalid(f"unknown behavior {adv.behavior!r}")
            if adv.behavior == FORK_EVERY and adv.param < 1:
                raise ConfigInvalid("fork_every needs a period >= 1")
        limit = (self.n - 1) // 3
        if len(self.adversaries) > limit and not self.allow_unsafe:
            raise ConfigInvalid(
                f"{len(self.adversaries)} adversaries exceed the safe bound {limit}; "
                "set allow_unsafe to override"
            )

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "h": self.h,
            "seed": self.seed,
            "target_events": self.target_events,
            "rounds": self.rounds,
            "latency": dict(self.latency),
            "adversaries": [a.to_dict() for a in self.adversaries],
            "payload_bytes": self.payload_bytes,
            "allow_unsafe": self.allow_unsafe,
            "audit_interval": self.audit_interval,
            "drain": self.drain,
            "drain_frame_cap": self.drain_frame_cap,
            "sync_timeout": self.sync_timeout,
            "broadcast": self.broadcast,
            "hash": "sha256",
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SimConfig":
        adversaries = [
            Adversary(a["node"], a["behavior"], a.get("param", 0))
            for a in obj.get("adversaries", [])
        ]
        fields = {
            key: obj[key]
            for key in (
                "n",
                "k",
                "h",
                "seed",
                "target_events",
                "rounds",
                "payload_bytes",
                "allow_unsafe",
                "audit_interval",
                "drain",
                "drain_frame_cap",
                "sync_timeout",
                "broadcast",
            )
            if key in obj
        }
        if "latency" in obj:
            fields["latency"] = obj["latency"]
        return cls(adversaries=adversaries, **fields)

    @classmethod
    def from_file(cls, path) -> "SimConfig":
        with open(path) as fh:
            text = fh.read()
        text = text.strip()
        if not text:
            raise ConfigInvalid(f"empty config file {path}")
        if text.startswith("{"):
            return cls.from_dict(json.loads(text))
        return cls.from_dict(_parse_kv(text))


def _parse_kv(text: str) -> dict:
    """key=value lines; latency=fixed:1 | uniform:1:3, adversary=2:fork_every:5."""
    obj: dict = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"bad config line: {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "latency":
            parts = value.split(":")
            if parts[0] == "fixed":
                obj["latency"] = {"kind": "fixed", "value": int(parts[1])}
            elif parts[0] == "uniform":
                obj["latency"] = {"kind": "uniform", "lo": int(parts[1]), "hi": int(parts[2])}
            else:
                raise ConfigInvalid(f"bad latency spec {value!r}")
        elif key == "adversary":
            advs = obj.setdefault("adversaries", [])
            for spec in value.split(","):
                parts = spec.split(":")
                advs.append(
                    {
                        "node": int(parts[0]),
                        "behavior": parts[1],
                        "param": int(parts[2]) if len(parts) > 2 else 0,
                    }
                )
        elif key in ("allow_unsafe", "drain", "broadcast"):
            obj[key] = value.lower() in ("1", "true", "yes")
        else:
            obj[key] = int(value)
    return obj


# -- messages ----------------------------------------------------------------

_WAKE = "wake"
_TIMEOUT = "timeout"
_REQUEST = "request"
_RESPONSE = "response"
_PUSH = "push"


@dataclass(slots=True)
class _Envelope:
    kind: str
    sender: int
    receiver: int
    sync: SyncMessage | None = None
    generation: int = 0


class SimNode:
    """Per-node actor: chain, ledger, book, rng and sync machinery."""

    def __init__(self, node_id: int, config: SimConfig, behavior: str, param: int):
        self.id = node_id
        self.behavior = behavior
        self.param = param
        self.chain = OperaChain(config.n, config.k)
        self.ledger = FrameLedger(config.n, config.k, config.h)
        self.book = NodeBook(config.n)
        self.rng = random.Random(f"{config.seed}:{node_id}")
        self.busy = False
        self.generation = 0
        self.pending: set[int] = set()
        self.selected: tuple[int, ...] = ()
        self.orphans: dict[EventId, list[EventBlock]] = {}
        self.orphan_ids: set[EventId] = set()
        self.created = 0
        self.branch_tips: list[EventId] = []
        self.branch_turn = 0
        self.seen_fork_pairs: dict[int, int] = {}
        self.iterations = 0
        self.iter_start = 0
        self.finalized_lags: list[int] = []
        self.predrain_finalized = 0
        self._finalized_seen = 0

    @property
    def honest(self) -> bool:
        return self.behavior == HONEST

    def sync_known(self) -> dict[int, int]:
        """Known map to advertise; empty (full pull) while orphans persist."""
        if self.orphan_ids:
            return {}
        return dict(self.book.known)


class World:
    """Complete simulation state plus the deterministic message queue."""

    def __init__(self, config: SimConfig):
        config.validate()
        self.config = config
        behaviors = {a.node: (a.behavior, a.param) for a in config.adversaries}
        self.nodes = [
            SimNode(i, config, *behaviors.get(i, (HONEST, 0))) for i in range(config.n)
        ]
        self.queue: list[tuple[int, int, int, int, _Envelope]] = []
        self.tick = 0
        self.msg_seq: dict[int, int] = {i: 0 for i in range(config.n)}
        self.created = 0
        self.inserted = 0
        self.creating = True
        self.draining = False
        self.stalled = False
        self.pre_drain_ids: set[EventId] = set()
        self.predrain_total = 0
        self.drain_start_frame = 0
        self.wakes_since_progress = 0
        self.drain_completed = True
        self.truth_forks: list[dict] = []
        self.fork_detections: list[dict] = []
        self.violations: list[str] = []
        self.round_rows: list[tuple[int, int, int, int, int, int]] = []
        self.trace_hash = hashlib.sha256()
        self.trace_writer: Callable[[str], None] | None = None
        if config.audit_interval is not None:
            self.audit_every = config.audit_interval
        elif config.target_events is not None:
            self.audit_every = max(500, config.target_events * config.n // 3)
        else:
            self.audit_every = 10_000

    # -- plumbing ------------------------------------------------------------

    def trace(self, **entry) -> None:
        line = json.dumps(entry, sort_keys=True, separators=(",", ":"))
        self.trace_hash.update(line.encode() + b"\n")
        if self.trace_writer is not None:
            self.trace_writer(line)

    def send(self, delay: int, env: _Envelope) -> None:
        seq = self.msg_seq[env.sender]
        self.msg_seq[env.sender] = seq + 1
        heapq.heappush(self.queue, (self.tick + delay, env.sender, env.receiver, seq, env))

    def latency(self, node: SimNode) -> int:
        spec = self.config.latency
        if spec["kind"] == "fixed":
            return spec["value"]
        return node.rng.randint(spec["lo"], spec["hi"])

    def payload_for(self, node: SimNode) -> bytes:
        if self.draining or self.config.payload_bytes <= 0:
            return b""
        return node.rng.getrandbits(8 * self.config.payload_bytes).to_bytes(
            self.config.payload_bytes, "big"
        )

    def honest_nodes(self) -> list[SimNode]:
        return [n for n in self.nodes if n.honest]

    # -- event intake ----------------------------------------------------------

    def ingest(self, node: SimNode, ev: EventBlock) -> bool:
        """Insert one event into a node, with orphan buffering."""
        if ev.id in node.chain:
            return False
        missing = [pid for pid in ev.parents if pid not in node.chain]
        if missing:
            for pid in missing:
                node.orphans.setdefault(pid, []).append(ev)
            node.orphan_ids.add(ev.id)
            return False
        self._insert(node, ev)
        self._drain_orphans(node, ev.id)
        return True

    def _insert(self, node: SimNode, ev: EventBlock) -> None:
        node.chain.insert_event(ev)
        observe_event(node.book, node.chain, ev)
        process_event(node.ledger, node.chain, ev)
        node.orphan_ids.discard(ev.id)
        self.inserted += 1
        self.wakes_since_progress = 0
        self._note_forks(node, ev.creator)
        self._note_finalized(node)
        if self.audit_every and self.inserted % self.audit_every == 0:
            self.violations.extend(audit(self))

    def _drain_orphans(self, node: SimNode, fresh: EventId) -> None:
        ready = [fresh]
        while ready:
            pid = ready.pop()
            waiters = node.orphans.pop(pid, ())
            for ev in waiters:
                if ev.id in node.chain:
                    node.orphan_ids.discard(ev.id)
                    continue
                if all(p in node.chain for p in ev.parents):
                    self._insert(node, ev)
                    ready.append(ev.id)

    def _note_forks(self, node: SimNode, creator: int) -> None:
        pairs = node.chain.fork_pairs(creator)
        prev = node.seen_fork_pairs.get(creator, 0)
        if len(pairs) > prev:
            for a, b in pairs[prev:]:
                self.fork_detections.append(
                    {
                        "node": node.id,
                        "creator": creator,
                        "members": sorted((a.hex(), b.hex())),
                        "frame": node.ledger.max_frame,
                        "tick": self.tick,
                    }
                )
            node.seen_fork_pairs[creator] = len(pairs)

    def _note_finalized(self, node: SimNode) -> None:
        records = node.ledger.finalized
        while node._finalized_seen < len(records):
            rec = records[node._finalized_seen]
            frame = node.ledger.frame_of.get(rec.event, 0)
            node.finalized_lags.append(node.ledger.max_frame - frame)
            if rec.event in self.pre_drain_ids:
                node.predrain_finalized += 1
            node._finalized_seen += 1

    # -- node actions ------------------------------------------------------------

    def bootstrap(self) -> None:
        for node in self.nodes:
            if node.behavior == SILENT:
                continue
            leaf = create_event(node.chain, node.book, node.id, [], self.payload_for(node))
            self.ingest(node, leaf)
            node.created += 1
            self.created += 1
            self.trace(t=0, kind="leaf", node=node.id, id=leaf.id.hex()[:12])
        period = self.config.effective_wake_period()
        for node in self.nodes:
            if node.behavior != SILENT:
                # Staggered phases keep iteration windows decorrelated;
                # identical phases would let wake order shadow later ids.
                self.send(node.rng.randint(0, period - 1), _Envelope(_WAKE, node.id, node.id))

    def _may_iterate(self, node: SimNode) -> bool:
        if self.draining:
            return True
        if not self.creating:
            return False
        if self.config.rounds is not None:
            return node.iterations < self.config.rounds
        return True

    def wake(self, node: SimNode) -> None:
        if node.busy or node.behavior == SILENT:
            return
        if not self._may_iterate(node):
            return
        self.wakes_since_progress += 1
        if self.wakes_since_progress > 50 * self.config.n:
            self._stall()
            return
        peers = self._choose_peers(node)
        if peers is None:
            self.send(1, _Envelope(_WAKE, node.id, node.id))
            return
        node.generation += 1
        node.iter_start = self.tick
        node.busy = True
        node.pending = set(peers)
        node.selected = tuple(sorted(peers))
        known = node.sync_known()
        for peer in node.selected:
            req = SyncMessage("request", node.id, peer, dict(known))
            self.send(self.latency(node), _Envelope(_REQUEST, node.id, peer, req))
        self.send(
            self.config.sync_timeout,
            _Envelope(_TIMEOUT, node.id, node.id, generation=node.generation),
        )

    def _stall(self) -> None:
        """No progress for many wake cycles: give up on the run length."""
        self.stalled = True
        if self.draining:
            self.drain_completed = False
            if not self.config.adversaries:
                self.violations.append(
                    "liveness: drain stalled before all pre-drain events finalized"
                )
        self.creating = False
        self.draining = False
        self.trace(t=self.tick, kind="stall")

    def _choose_peers(self, node: SimNode) -> set[int] | None:
        for _ in range(3):
            peers = select_peers(node.book, node.id, self.config.k, node.rng)
            if not any(self.nodes[p].busy for p in peers):
                return peers
        # Re-draws keep hitting mid-sync peers: settle on the cheapest
        # currently idle selection, or skip the round when too few remain.
        busy = {p.id for p in self.nodes if p.busy}
        try:
            return select_peers(
                node.book, node.id, self.config.k, node.rng, exclude=busy
            )
        except InsufficientPeers:
            return None

    def deliver(self, env: _Envelope) -> None:
        if env.kind == _WAKE:
            self.wake(self.nodes[env.receiver])
        elif env.kind == _TIMEOUT:
            node = self.nodes[env.receiver]
            if node.busy and node.generation == env.generation:
                self.trace(t=self.tick, kind="timeout", node=node.id)
                self._finish_iteration(node)
        elif env.kind == _REQUEST:
            responder = self.nodes[env.receiver]
            if responder.behavior == SILENT:
                return
            response = handle_sync(env.sync, responder.chain, responder.book)
            self.trace(
                t=self.tick, kind="req", s=env.sender, r=env.receiver,
                n=len(response.events),
            )
            self.send(
                self.latency(responder),
                _Envelope(_RESPONSE, env.receiver, env.sender, response),
            )
        elif env.kind in (_RESPONSE, _PUSH):
            node = self.nodes[env.receiver]
            learn_heights(node.book, env.sync.known_snapshot)
            applied = 0
            for ev in env.sync.events:
                if self.ingest(node, ev):
                    applied += 1
            self.trace(
                t=self.tick, kind=env.kind, s=env.sender, r=env.receiver, n=applied
            )
            if env.kind == _RESPONSE and node.busy:
                node.pending.discard(env.sender)
                if not node.pending:
                    self._finish_iteration(node)

    def _finish_iteration(self, node: SimNode) -> None:
        node.busy = False
        node.iterations += 1
        self._create_phase(node)
        if node.id == 0:
            led = node.ledger
            statuses = list(led.clotho_check.values())
            self.round_rows.append(
                (
                    node.iterations,
                    led.max_frame,
                    len(led.root_ids),
                    sum(1 for s in statuses if s == RootStatus.CLOTHO),
                    sum(1 for s in statuses if s == RootStatus.ATROPOS),
                    len(led.finalized),
                )
            )
        if self.creating and self.config.rounds is not None:
            active = [n for n in self.nodes if n.behavior != SILENT]
            if all(n.iterations >= self.config.rounds for n in active):
                self._enter_drain()
        if self._may_iterate(node):
            jitter = node.rng.randint(0, 1)
            next_start = node.iter_start + self.config.effective_wake_period() + jitter
            self.send(max(1, next_start - self.tick), _Envelope(_WAKE, node.id, node.id))

    def _create_phase(self, node: SimNode) -> None:
        if not (self.creating or self.draining):
            return
        tops = []
        for peer in node.selected:
            top = node.chain.top_event(peer)
            if top is None:
                self.trace(t=self.tick, kind="skip_create", node=node.id)
                return
            tops.append(top)
        if node.behavior in (FORK_ONCE, FORK_EVERY) and self._fork_due(node):
            self._do_fork(node, tops)
        else:
            if node.branch_tips:
                ev = self._extend_branch(node, tops)
            else:
                ev = create_event(
                    node.chain, node.book, node.id, tops, self.payload_for(node)
                )
            self.ingest(node, ev)
            node.created += 1
            self.created += 1
            self.trace(t=self.tick, kind="create", node=node.id, id=ev.id.hex()[:12])
            if self.config.broadcast:
                self._broadcast(node, ev)
        if self.creating and self.config.target_events is not None:
            if self.created >= self.config.target_events:
                self._enter_drain()

    def _fork_due(self, node: SimNode) -> bool:
        next_seq = node.chain.highest_seq(node.id) + 1
        if node.behavior == FORK_ONCE:
            target = node.param or 3
            return next_seq == target and not node.branch_tips
        period = max(1, node.param)
        return next_seq >= 2 and node.created % period == 0

    def _do_fork(self, node: SimNode, tops: list[EventId]) -> None:
        pair = byzantine_fork(node, tops, self.payload_for(node), self.payload_for(node))
        for ev in pair:
            self.ingest(node, ev)
            node.created += 1
            self.created += 1
        node.branch_tips = [pair[0].id, pair[1].id]
        node.branch_turn = 0
        self.truth_forks.append(
            {
                "creator": node.id,
                "members": sorted((pair[0].id.hex(), pair[1].id.hex())),
                "seq": pair[0].seq,
                "tick": self.tick,
            }
        )
        self.trace(
            t=self.tick, kind="fork", node=node.id,
            a=pair[0].id.hex()[:12], b=pair[1].id.hex()[:12],
        )
        others = sorted(
            p.id for p in self.nodes if p.id != node.id and p.behavior != SILENT
        )
        if len(others) >= 2:
            split = node.rng.randint(1, len(others) - 1)
            shuffled = list(others)
            node.rng.shuffle(shuffled)
            groups = (sorted(shuffled[:split]), sorted(shuffled[split:]))
        else:
            groups = (others, [])
        for branch, group in zip(pair, groups):
            closure = self._closure_events(node.chain, branch.id)
            for peer in group:
                push = SyncMessage("response", node.id, peer, {}, list(closure))
                self.send(self.latency(node), _Envelope(_PUSH, node.id, peer, push))

    def _extend_branch(self, node: SimNode, tops: list[EventId]) -> EventBlock:
        """A forked creator keeps alternating between its branch heads."""
        node.branch_turn = (node.branch_turn + 1) % len(node.branch_tips)
        head = node.chain.get(node.branch_tips[node.branch_turn])
        others = [node.chain.get(t) for t in tops]
        ev = build_event(node.id, head, others, self.payload_for(node))
        node.branch_tips[node.branch_turn] = ev.id
        return ev

    def _closure_events(self, chain: OperaChain, eid: EventId) -> list[EventBlock]:
        ids = sorted(chain.ancestor_ids(eid) | {eid}, key=chain.index_of)
        return [chain.get(i) for i in ids]

    def _broadcast(self, node: SimNode, ev: EventBlock) -> None:
        for peer in self.nodes:
            if peer.id == node.id or peer.behavior == SILENT:
                continue
            push = SyncMessage("response", node.id, peer.id, {}, [ev])
            self.send(self.latency(node), _Envelope(_PUSH, node.id, peer.id, push))

    # -- drain / settle -----------------------------------------------------------

    def _enter_drain(self) -> None:
        self.creating = False
        if not self.config.drain:
            self.draining = False
            return
        self.draining = True
        self.pre_drain_ids = {
            ev.id for node in self.nodes for ev in node.chain.in_insertion_order()
        }
        self.predrain_total = len(self.pre_drain_ids)
        for node in self.honest_nodes():
            node.predrain_finalized = sum(
                1 for rec in node.ledger.finalized if rec.event in self.pre_drain_ids
            )
        self.drain_start_frame = max(n.ledger.max_frame for n in self.honest_nodes())
        self.trace(t=self.tick, kind="drain_start", events=self.predrain_total)
        for node in self.nodes:
            if node.behavior != SILENT and not node.busy:
                self.send(1, _Envelope(_WAKE, node.id, node.id))

    def _drain_done(self) -> bool:
        return all(
            node.predrain_finalized >= self.predrain_total
            for node in self.honest_nodes()
        )

    def _drain_capped(self) -> bool:
        top = max(n.ledger.max_frame for n in self.honest_nodes())
        return top - self.drain_start_frame > self.config.drain_frame_cap

    def settle(self) -> None:
        """Quiescence: direct sync sweeps until honest chains stop growing."""
        for _ in range(4 * self.config.n):
            changed = False
            for dst in self.honest_nodes():
                for src in self.nodes:
                    if src.id == dst.id or src.behavior == SILENT:
                        continue
                    req = SyncMessage("request", dst.id, src.id, dst.sync_known())
                    resp = handle_sync(req, src.chain, src.book)
                    for ev in resp.events:
                        if self.ingest(dst, ev):
                            changed = True
            if not changed:
                break
        self.trace(t=self.tick, kind="settle")

    # -- run loop --------------------------------------------------------------

    def step(self) -> bool:
        """Deliver the earliest scheduled message; False when idle."""
        if not self.queue:
            return False
        tick, _s, _r, _q, env = heapq.heappop(self.queue)
        self.tick = tick
        self.deliver(env)
        return True


def byzantine_fork(
    node: SimNode, tops: list[EventId], payload_a: bytes, payload_b: bytes
) -> tuple[EventBlock, EventBlock]:
    """Two children of the node's current head with distinct payloads."""
    head_id = node.chain.top_event(node.id)
    head = node.chain.get(head_id)
    others = [node.chain.get(t) for t in tops]
    ev_a = build_event(node.id, head, others, payload_a or b"\x00")
    ev_b = build_event(node.id, head, others, (payload_b or b"\x00") + b"\x01")
    return ev_a, ev_b


def step(world: World) -> World:
    """Advance the world by one delivery; no-op on an empty queue."""
    world.step()
    return world


# -- audit -----------------------------------------------------------------------


def audit(world: World, final: bool = False) -> list[str]:
    """Cross-node invariant checks; returns human-readable violations."""
    violations: list[str] = []
    honest = world.honest_nodes()
    for node in honest:
        for eid, ev in node.chain.events.items():
            for pid in ev.parents:
                if pid not in node.chain.events:
                    violations.append(
                        f"consistent-cut: node {node.id} holds {eid.hex()[:8]} "
                        f"without parent {pid.hex()[:8]}"
                    )
    for i, a in enumerate(honest):
        for b in honest[i + 1 :]:
            violations.extend(_audit_pair(a, b, final))
    for fork in world.truth_forks:
        for member_hex in fork["members"]:
            member = bytes.fromhex(member_hex)
            for node in honest:
                status = node.ledger.clotho_check.get(member)
                if status in (RootStatus.CLOTHO, RootStatus.ATROPOS):
                    violations.append(
                        f"fork-exclusion: node {node.id} marked fork member "
                        f"{member_hex[:8]} as {status.value}"
                    )
    return violations


def _audit_pair(a: SimNode, b: SimNode, final: bool) -> list[str]:
    out: list[str] = []
    a_events = a.chain.events
    b_events = b.chain.events
    a_frames = a.ledger.frame_of
    b_frames = b.ledger.frame_of
    a_roots = a.ledger.root_ids
    b_roots = b.ledger.root_ids
    for eid in a_events.keys() & b_events.keys():
        ea = a_events[eid]
        eb = b_events[eid]
        if ea.parents != eb.parents or ea.creator != eb.creator or ea.seq != eb.seq:
            out.append(f"chain: {eid.hex()[:8]} differs between {a.id} and {b.id}")
        if a_frames.get(eid) != b_frames.get(eid) or (eid in a_roots) != (eid in b_roots):
            out.append(
                f"root: {eid.hex()[:8]} frame/root status differs on {a.id},{b.id}"
            )
        sa = a.ledger.clotho_check.get(eid)
        sb = b.ledger.clotho_check.get(eid)
        if sa == RootStatus.ATROPOS and sb == RootStatus.ATROPOS:
            if a.ledger.consensus_time[eid] != b.ledger.consensus_time[eid]:
                out.append(f"atropos: {eid.hex()[:8]} times differ on {a.id},{b.id}")
        elif {sa, sb} == {RootStatus.ATROPOS, RootStatus.EXCLUDED}:
            out.append(f"atropos: {eid.hex()[:8]} decided differently on {a.id},{b.id}")
    for creator in range(a.chain.n):
        ta = a.chain.top_event(creator)
        if ta is not None and ta == b.chain.top_event(creator):
            fta = a.ledger.merge_table.get(ta)
            ftb = b.ledger.merge_table.get(ta)
            if fta and ftb and (
                fta.entries != ftb.entries
                or fta.frame_of_entries != ftb.frame_of_entries
            ):
                out.append(f"flag-table: top {ta.hex()[:8]} differs on {a.id},{b.id}")
    la, lb = a.ledger.finalized, b.ledger.finalized
    for ra, rb in zip(la, lb):
        if ra.event != rb.event or ra.atropos_time != rb.atropos_time:
            out.append(
                f"order: position {ra.position} differs between {a.id} and {b.id}"
            )
            break
    if final:
        if [r.event for r in la] != [r.event for r in lb]:
            out.append(f"order: final orders differ between {a.id} and {b.id}")
        ma = [(e.atropos.hex(), e.consensus_time) for e in a.ledger.main_chain]
        mb = [(e.atropos.hex(), e.consensus_time) for e in b.ledger.main_chain]
        if ma != mb:
            out.append(f"main-chain: differs between {a.id} and {b.id}")
        ca = {
            eid
            for eid, s in a.ledger.clotho_check.items()
            if s in (RootStatus.CLOTHO, RootStatus.ATROPOS)
        }
        cb = {
            eid
            for eid, s in b.ledger.clotho_check.items()
            if s in (RootStatus.CLOTHO, RootStatus.ATROPOS)
        }
        if ca != cb:
            out.append(f"clotho: sets differ between {a.id} and {b.id}")
    return out


# -- reports ----------------------------------------------------------------------


@dataclass
class SimReport:
    config: dict
    events_created: int
    ticks: int
    trace_hash: str
    violations: list[str]
    fork_detections: list[dict]
    truth_forks: list[dict]
    per_node: list[dict]
    stats: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "config": self.config,
                "events_created": self.events_created,
                "ticks": self.ticks,
                "trace_hash": self.trace_hash,
                "violations": self.violations,
                "fork_detections": self.fork_detections,
                "truth_forks": self.truth_forks,
                "per_node": self.per_node,
                "stats": self.stats,
            },
            sort_keys=True,
            indent=2,
        )


def run_world(
    config: SimConfig, trace_writer: Callable[[str], None] | None = None
) -> World:
    """Drive a world to quiescence; the final audit is already applied."""
    world = World(config)
    world.trace_writer = trace_writer
    world.trace(t=0, kind="config", n=config.n, k=config.k, seed=config.seed)
    world.bootstrap()
    if config.target_events is not None and world.created >= config.target_events:
        world._enter_drain()
    guard = 0
    hard_cap = 5_000_000
    while world.queue:
        guard += 1
        if guard > hard_cap:
            world.violations.append("runaway: exceeded scheduler hard cap")
            break
        world.step()
        if world.draining and (world._drain_done() or world._drain_capped()):
            world.drain_completed = world._drain_done()
            if not world.drain_completed and not config.adversaries:
                # Liveness is only promised for fair no-fault runs.
                world.violations.append(
                    "liveness: drain cap hit before all pre-drain events finalized"
                )
            world.draining = False
    world.settle()
    for node in world.honest_nodes():
        finalize_order(node.ledger, node.chain)
        world._note_finalized(node)
    world.violations.extend(audit(world, final=True))
    return world


def run(config: SimConfig, trace_writer: Callable[[str], None] | None = None) -> SimReport:
    """Execute one simulation to quiescence and return the audited report."""
    return _build_report(run_world(config, trace_writer))


def _build_report(world: World) -> SimReport:
    per_node = []
    for node in world.nodes:
        led = node.ledger
        statuses = list(led.clotho_check.values())
        atropos = sum(1 for s in statuses if s == RootStatus.ATROPOS)
        per_node.append(
            {
                "node": node.id,
                "behavior": node.behavior,
                "events": len(node.chain),
                "frames": led.max_frame,
                "roots": len(led.root_ids),
                "clothos": atropos + sum(1 for s in statuses if s == RootStatus.CLOTHO),
                "atropos": atropos,
                "excluded": sum(1 for s in statuses if s == RootStatus.EXCLUDED),
                "finalized": [rec.event.hex() for rec in led.finalized],
                "finalized_count": len(led.finalized),
                "main_chain": led.main_chain_records(),
                "max_finalization_lag": max(node.finalized_lags, default=0),
            }
        )
    honest = world.honest_nodes()
    rounds = max((n.iterations for n in honest), default=0)
    stats = {
        "rounds": rounds,
        "events_per_round": round(world.created / rounds, 3) if rounds else 0.0,
        "max_finalization_lag_frames": max(
            (max(n.finalized_lags, default=0) for n in honest), default=0
        ),
        "pre_drain_events": world.predrain_total,
        "inserted_total": world.inserted,
        "stalled": world.stalled,
        "drain_completed": world.drain_completed,
    }
    return SimReport(
        config=world.config.to_dict(),
        events_created=world.created,
        ticks=world.tick,
        trace_hash=world.trace_hash.hexdigest(),
        violations=list(world.violations),
        fork_detections=list(world.fork_detections),
        truth_forks=list(world.truth_forks),
        per_node=per_node,
        stats=stats,
    )
