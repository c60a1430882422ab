"""Node-local append-only event DAG (OPERA chain).

The chain stores event blocks keyed by content id, keeps reverse edges and
per-creator tips, and answers ancestry, concurrency and fork queries.
Ancestry is accelerated with per-event bitmasks over insertion indices
(exact, fork-safe); the brute-force BFS reference lives in
:mod:`lachesis.oracle` and is used by the tests as an independent check.

A chain accepts an event only when all referenced parents are already
present, so every stored ancestry is complete and acyclic by construction.
"""

from __future__ import annotations

from .errors import (
    DuplicateEvent,
    MalformedReferences,
    MissingParent,
    UnknownEvent,
)
from .events import EventBlock, EventId, event_id


class OperaChain:
    """Append-only DAG of event blocks for one node.

    Single writer: mutation requires exclusive access, read queries are
    safe between mutations.  Nothing here depends on wall-clock time or
    process-global state.
    """

    def __init__(self, n: int, k: int):
        if n < 1:
            raise ValueError("need at least one participant")
        if not 2 <= k <= max(n, 2):
            raise ValueError("k must satisfy 2 <= k <= n")
        self.n = n
        self.k = k
        self.events: dict[EventId, EventBlock] = {}
        self.children: dict[EventId, set[EventId]] = {}
        self.leaf_set: set[EventId] = set()
        # Insertion order; index into the ancestry masks below.
        self._order: list[EventId] = []
        self._index: dict[EventId, int] = {}
        self._anc_mask: list[int] = []   # ancestors of event (excluding itself)
        self._self_mask: list[int] = []  # self-parent chain ancestors
        self._tips: dict[int, set[EventId]] = {}
        self._by_creator: dict[int, list[EventId]] = {}
        self._linear: dict[int, bool] = {}
        self._fork_pairs: dict[int, list[tuple[EventId, EventId]]] = {}
        self._first_fork_seq: dict[int, int] = {}

    # -- queries -----------------------------------------------------------

    def __contains__(self, eid: EventId) -> bool:
        return eid in self.events

    def __len__(self) -> int:
        return len(self.events)

    def get(self, eid: EventId) -> EventBlock:
        try:
            return self.events[eid]
        except KeyError:
            raise UnknownEvent(eid.hex()) from None

    def in_insertion_order(self) -> list[EventBlock]:
        return [self.events[eid] for eid in self._order]

    @property
    def heads(self) -> dict[int, EventId]:
        """One representative tip per creator (max (seq, id) under forks)."""
        out = {}
        for creator, tips in self._tips.items():
            if tips:
                out[creator] = max(tips, key=lambda e: (self.events[e].seq, e))
        return out

    def top_event(self, creator: int) -> EventId | None:
        tips = self._tips.get(creator)
        if not tips:
            return None
        return max(tips, key=lambda e: (self.events[e].seq, e))

    def tips_of(self, creator: int) -> set[EventId]:
        return set(self._tips.get(creator, ()))

    def all_tips(self) -> list[EventId]:
        """Per-creator top events (no same-creator successor)."""
        out: list[EventId] = []
        for tips in self._tips.values():
            out.extend(tips)
        return sorted(out)

    def graph_tips(self) -> list[EventId]:
        """Events no other event references at all; the pseudo top above
        the DAG is the parent of exactly these."""
        return sorted(eid for eid, kids in self.children.items() if not kids)

    def events_by(self, creator: int) -> list[EventId]:
        return list(self._by_creator.get(creator, ()))

    def highest_seq(self, creator: int) -> int:
        """Highest seq stored for a creator on any branch; -1 when none."""
        ids = self._by_creator.get(creator)
        if not ids:
            return -1
        return max(self.events[e].seq for e in ids)

    # -- mutation ----------------------------------------------------------

    def insert_event(self, ev: EventBlock) -> None:
        """Store one event, validating references against the chain.

        Raises DuplicateEvent for an already-stored id, MissingParent when
        any referenced parent is absent, and MalformedReferences for a bad
        reference structure (wrong count, self-parent mismatch, stale
        lamport, or an id that does not match the canonical encoding).
        """
        if ev.id in self.events:
            raise DuplicateEvent(ev.id.hex())
        if not 0 <= ev.creator < self.n:
            raise MalformedReferences(f"creator {ev.creator} out of range")
        if ev.is_leaf:
            if ev.other_parents:
                raise MalformedReferences("leaf event must carry no references")
            if ev.seq != 0:
                raise MalformedReferences("leaf event must have seq 0")
            if ev.lamport_ts != 0:
                raise MalformedReferences("leaf event must have lamport 0")
        else:
            if len(ev.other_parents) != self.k - 1:
                raise MalformedReferences(
                    f"expected {self.k - 1} other-parents, got {len(ev.other_parents)}"
                )
            if ev.self_parent not in self.events:
                raise MissingParent(ev.self_parent.hex())
            for pid in ev.other_parents:
                if pid not in self.events:
                    raise MissingParent(pid.hex())
            sp = self.events[ev.self_parent]
            if sp.creator != ev.creator:
                raise MalformedReferences("self-parent creator mismatch")
            if ev.seq != sp.seq + 1:
                raise MalformedReferences("seq must follow the self-parent chain")
            seen = {ev.creator}
            for pid in ev.other_parents:
                oc = self.events[pid].creator
                if oc in seen:
                    raise MalformedReferences("other-parents must come from distinct peers")
                seen.add(oc)
            for pid in ev.parents:
                if self.events[pid].lamport_ts >= ev.lamport_ts:
                    raise MalformedReferences("lamport must exceed every parent")
        expect = event_id(
            ev.creator, ev.seq, ev.self_parent, ev.other_parents, ev.lamport_ts, ev.payload
        )
        if expect != ev.id:
            raise MalformedReferences("id does not match canonical encoding")

        idx = len(self._order)
        anc = 0
        self_anc = 0
        for pid in ev.parents:
            pidx = self._index[pid]
            anc |= self._anc_mask[pidx] | (1 << pidx)
        if ev.self_parent is not None:
            spidx = self._index[ev.self_parent]
            self_anc = self._self_mask[spidx] | (1 << spidx)

        self.events[ev.id] = ev
        self.children[ev.id] = set()
        for pid in ev.parents:
            self.children[pid].add(ev.id)
        self._order.append(ev.id)
        self._index[ev.id] = idx
        self._anc_mask.append(anc)
        self._self_mask.append(self_anc)

        tips = self._tips.setdefault(ev.creator, set())
        if ev.self_parent is not None:
            tips.discard(ev.self_parent)
        tips.add(ev.id)
        if ev.is_leaf:
            self.leaf_set.add(ev.id)
        self._record_creator_event(ev, idx)

    def _record_creator_event(self, ev: EventBlock, idx: int) -> None:
        siblings = self._by_creator.setdefault(ev.creator, [])
        linear = self._linear.get(ev.creator, True)
        if linear and siblings:
            prev = self.events[siblings[-1]]
            linear = ev.self_parent == prev.id and ev.seq == prev.seq + 1
        elif linear and not siblings:
            linear = ev.is_leaf
        if not linear:
            # Branching creator: compare against every stored sibling.
            self._linear[ev.creator] = False
            for sid in siblings:
                sidx = self._index[sid]
                if (self._self_mask[idx] >> sidx) & 1:
                    continue
                if (self._self_mask[sidx] >> idx) & 1:
                    continue
                pair = (min(sid, ev.id), max(sid, ev.id))
                self._fork_pairs.setdefault(ev.creator, []).append(pair)
                low = min(self.events[pair[0]].seq, self.events[pair[1]].seq)
                cur = self._first_fork_seq.get(ev.creator)
                if cur is None or low < cur:
                    self._first_fork_seq[ev.creator] = low
        else:
            self._linear[ev.creator] = True
        siblings.append(ev.id)

    # -- ancestry ----------------------------------------------------------

    def happened_before(self, x: EventId, y: EventId) -> bool:
        """Strict: true iff x is a (self-)ancestor of y."""
        ix = self._index.get(x)
        iy = self._index.get(y)
        if ix is None:
            raise UnknownEvent(x.hex())
        if iy is None:
            raise UnknownEvent(y.hex())
        return bool((self._anc_mask[iy] >> ix) & 1)

    def concurrent(self, x: EventId, y: EventId) -> bool:
        return x != y and not self.happened_before(x, y) and not self.happened_before(y, x)

    def self_ancestor(self, x: EventId, y: EventId) -> bool:
        """True iff x is on y's self-parent chain (strict)."""
        ix = self._index.get(x)
        iy = self._index.get(y)
        if ix is None:
            raise UnknownEvent(x.hex())
        if iy is None:
            raise UnknownEvent(y.hex())
        return bool((self._self_mask[iy] >> ix) & 1)

    def ancestor_ids(self, v: EventId) -> set[EventId]:
        """All strict ancestors of v."""
        iv = self._index.get(v)
        if iv is None:
            raise UnknownEvent(v.hex())
        return {self._order[i] for i in _bits(self._anc_mask[iv])}

    def ancestry_mask(self, v: EventId) -> int:
        iv = self._index.get(v)
        if iv is None:
            raise UnknownEvent(v.hex())
        return self._anc_mask[iv]

    def index_of(self, v: EventId) -> int:
        iv = self._index.get(v)
        if iv is None:
            raise UnknownEvent(v.hex())
        return iv

    def id_at(self, index: int) -> EventId:
        return self._order[index]

    def subgraph(self, v: EventId) -> "OperaChain":
        """Induced subgraph of v and all its ancestors."""
        iv = self._index.get(v)
        if iv is None:
            raise UnknownEvent(v.hex())
        sub = OperaChain(self.n, self.k)
        for i in sorted(_bits(self._anc_mask[iv] | (1 << iv))):
            sub.insert_event(self.events[self._order[i]])
        return sub

    # -- forks -------------------------------------------------------------

    def detect_forks(self, creator: int) -> list[tuple[EventId, EventId]]:
        """All stored fork pairs for a creator, (x, y) with x < y by id."""
        return sorted(self._fork_pairs.get(creator, ()))

    def fork_pairs(self, creator: int) -> list[tuple[EventId, EventId]]:
        """Fork pairs in detection order (stable for incremental consumers)."""
        return list(self._fork_pairs.get(creator, ()))

    def forked_creators(self) -> set[int]:
        return {c for c, pairs in self._fork_pairs.items() if pairs}

    def first_fork_seq(self, creator: int) -> int | None:
        """Lowest seq involved in a detected fork by this creator."""
        return self._first_fork_seq.get(creator)

    def fork_visible_in(self, creator: int, mask: int) -> bool:
        """True if some fork pair of the creator lies inside an ancestry mask."""
        for a, b in self._fork_pairs.get(creator, ()):
            ia = self._index[a]
            ib = self._index[b]
            if (mask >> ia) & 1 and (mask >> ib) & 1:
                return True
        return False


def _bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low
