"""Frame / root / Clotho / Atropos pipeline over an OPERA chain.

Every decision here is a function of event ancestry, so two nodes that
hold the same events always reach the same conclusions:

* a new event's flag table is the OR-merge of its parents' tables,
  restricted to the latest frame among the parents;
* an event becomes a root when its flag table reaches more than 2n/3 of
  the previous frame's roots (leaves are roots by definition), and a new
  root opens the next frame;
* a root becomes a Clotho when, seen from some root three frames later,
  more than 2n/3 of the next frame's roots reach it;
* a Clotho becomes an Atropos once the candidate-time gossip converges:
  roots three frames up record their own lamport time, later roots
  re-select the most frequent (ties to the smallest) value among the
  previous frame's roots they reach, take the minimum on every h-th
  frame, and fix the consensus time when more than 2n/3 agree.

Atropos blocks and their consensus times form the Main-chain; finalized
ordering buckets every event under the earliest Atropos that reaches it
and sorts buckets by (consensus time, lamport time, id).

Roots of a creator with a detected fork are excluded from the Clotho
pipeline (status EXCLUDED) from the first forked seq onward, so no fork
member can ever anchor the Main-chain.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from enum import Enum

from .chain import OperaChain
from .errors import (
    EmptyInput,
    FrameNotFinalized,
    MissingParentTable,
    NotClotho,
    UnknownEvent,
)
from .events import EventBlock, EventId


class RootStatus(Enum):
    CANDIDATE = "candidate"
    CLOTHO = "clotho"
    ATROPOS = "atropos"
    EXCLUDED = "excluded"


DECIDED = (RootStatus.ATROPOS, RootStatus.EXCLUDED)

# Clotho confirmation looks this many frames past the candidate's frame.
CLOTHO_LOOKAHEAD = 3


@dataclass(slots=True)
class FlagTable:
    """Which roots of one frame an event reaches: root id -> creator id."""

    entries: dict[EventId, int] = field(default_factory=dict)
    frame_of_entries: int = 0


@dataclass(slots=True)
class Frame:
    index: int
    root_set: set[EventId] = field(default_factory=set)
    events: set[EventId] = field(default_factory=set)
    pruned: bool = False


@dataclass(slots=True)
class OrderKey:
    """Total order for finalized events: consensus time, then lamport, then id."""

    atropos_time: int
    lamport_ts: int
    id_digest: EventId

    def sort_key(self) -> tuple[int, int, EventId]:
        return (self.atropos_time, self.lamport_ts, self.id_digest)


@dataclass(slots=True)
class OrderRecord:
    position: int
    event: EventId
    atropos_time: int
    lamport_ts: int


@dataclass(slots=True)
class MainChainEntry:
    frame: int
    atropos: EventId
    consensus_time: int


class FrameLedger:
    """Per-node consensus bookkeeping layered over one OPERA chain."""

    def __init__(self, n: int, k: int, h: int = 10):
        self.n = n
        self.k = k
        self.h = h
        self.frames: dict[int, Frame] = {}
        self.frame_of: dict[EventId, int] = {}
        self.root_ids: set[EventId] = set()
        self.merge_table: dict[EventId, FlagTable] = {}
        self.clotho_check: dict[EventId, RootStatus] = {}
        self.candidate_times: dict[tuple[EventId, EventId], int] = {}
        self.consensus_time: dict[EventId, int] = {}
        self.main_chain: list[MainChainEntry] = []
        self.finalized: list[OrderRecord] = []
        self.max_frame = 0
        self._roots_sorted: dict[int, list[EventId]] = {}
        self._rooted_creators: dict[int, set[int]] = {}
        self._creator_max_frame: dict[int, int] = {}
        self._finalized_mask = 0
        self._next_emit_frame = 1
        self._nominated: dict[tuple[EventId, EventId], bool] = {}
        self._pending_clotho: set[EventId] = set()

    # -- frame bookkeeping --------------------------------------------------

    def frame(self, index: int) -> Frame:
        fr = self.frames.get(index)
        if fr is None:
            fr = Frame(index)
            self.frames[index] = fr
            self._roots_sorted[index] = []
        return fr

    def roots_of(self, index: int) -> list[EventId]:
        """Roots of one frame in id order (empty when the frame is unknown)."""
        return self._roots_sorted.get(index, [])

    def is_root(self, eid: EventId) -> bool:
        return eid in self.root_ids

    def status_of(self, eid: EventId) -> RootStatus | None:
        return self.clotho_check.get(eid)

    def undecided_roots(self, index: int) -> list[EventId]:
        return [
            r
            for r in self.roots_of(index)
            if self.clotho_check.get(r) not in DECIDED
        ]

    def register_event(self, ev: EventBlock, frame_index: int, is_root: bool,
                       table: FlagTable, promoted: bool = True) -> None:
        fr = self.frame(frame_index)
        fr.events.add(ev.id)
        self.frame_of[ev.id] = frame_index
        if frame_index > self._creator_max_frame.get(ev.creator, 0):
            self._creator_max_frame[ev.creator] = frame_index
        if is_root:
            fr.root_set.add(ev.id)
            bisect.insort(self._roots_sorted[frame_index], ev.id)
            self._rooted_creators.setdefault(frame_index, set()).add(ev.creator)
            self.root_ids.add(ev.id)
            self.clotho_check[ev.id] = RootStatus.CANDIDATE
            if promoted:
                entries = {ev.id: ev.creator}
            else:
                # A root joining its inherited frame also carries the
                # same-frame roots it reaches, so descendants count them.
                entries = dict(table.entries)
                entries[ev.id] = ev.creator
            self.merge_table[ev.id] = FlagTable(entries, frame_index)
            if frame_index > self.max_frame:
                self.max_frame = frame_index
        else:
            self.merge_table[ev.id] = table

    # -- exports -------------------------------------------------------------

    def main_chain_records(self) -> list[dict]:
        return [
            {
                "frame": entry.frame,
                "atropos": entry.atropos.hex(),
                "consensus_time": entry.consensus_time,
            }
            for entry in self.main_chain
        ]

    def order_records(self) -> list[dict]:
        return [
            {
                "position": rec.position,
                "event": rec.event.hex(),
                "atropos_time": rec.atropos_time,
                "lamport_ts": rec.lamport_ts,
            }
            for rec in self.finalized
        ]


# -- flag tables and roots ----------------------------------------------


def compute_flag_table(
    ev: EventBlock, parent_tables: list[FlagTable], ledger: FrameLedger
) -> FlagTable:
    """OR-merge of the parents' tables over the latest frame among them.

    A parent that is itself a root contributes its own entry (its stored
    table is the singleton {parent: creator} at its frame).  If the merge
    would hold two different roots by one creator, that creator forked and
    both entries are dropped, keeping at most one entry per creator.
    """
    if not ev.parents:
        raise MissingParentTable("leaf events have no parent tables to merge")
    if len(parent_tables) != len(ev.parents) or any(t is None for t in parent_tables):
        raise MissingParentTable(ev.id.hex())
    latest = max(t.frame_of_entries for t in parent_tables)
    merged: dict[EventId, int] = {}
    for table in parent_tables:
        if table.frame_of_entries != latest:
            continue
        merged.update(table.entries)
    by_creator: dict[int, int] = {}
    for creator in merged.values():
        by_creator[creator] = by_creator.get(creator, 0) + 1
    if any(count > 1 for count in by_creator.values()):
        merged = {
            rid: creator
            for rid, creator in merged.items()
            if by_creator[creator] == 1
        }
    return FlagTable(merged, latest)


def check_root(ev: EventBlock, table: FlagTable, n: int) -> bool:
    """Leaves are roots; otherwise the table must cover more than 2n/3 roots."""
    if ev.is_leaf:
        return True
    return 3 * len(table.entries) > 2 * n


def assign_frame(ev: EventBlock, is_root: bool, ledger: FrameLedger) -> int:
    """Leaves open frame 1; non-roots inherit the max parent frame; a new
    root advances one past the frame its flag table qualified over."""
    if ev.is_leaf:
        return 1
    latest = max(ledger.frame_of[pid] for pid in ev.parents)
    return latest + 1 if is_root else latest


def root_eligible(chain: OperaChain, ev: EventBlock) -> bool:
    """An event whose own ancestry contains a fork by its creator never
    becomes a root; the rule depends only on the event's subgraph."""
    mask = chain.ancestry_mask(ev.id)
    return not chain.fork_visible_in(ev.creator, mask)


def process_event(ledger: FrameLedger, chain: OperaChain, ev: EventBlock) -> bool:
    """Single consensus entry point, invoked right after each insertion.

    Computes the event's flag table, frame and root status, then advances
    Clotho selection, Atropos time consensus and the finalized order.
    Returns True when the event became a root.

    Root membership has two paths.  An event whose merged flag table
    covers more than 2n/3 of the latest parent frame's roots is promoted
    and opens the next frame.  Otherwise, a creator's first event at the
    frame it inherits from its parents also joins that frame's root set:
    it reaches more than 2n/3 of the previous frame's roots through the
    frame ancestor it inherits from, and without this rule root sets
    could never grow past the first promoted root.
    """
    prev_top_frame = ledger._creator_max_frame.get(ev.creator, 0)
    if ev.is_leaf:
        table = FlagTable({ev.id: ev.creator}, 1)
        ledger.register_event(ev, 1, True, table, promoted=True)
        rooted = True
    else:
        parent_tables = [ledger.merge_table.get(pid) for pid in ev.parents]
        table = compute_flag_table(ev, parent_tables, ledger)
        eligible = root_eligible(chain, ev)
        promoted = check_root(ev, table, ledger.n) and eligible
        frame_index = assign_frame(ev, promoted, ledger)
        rooted = promoted
        if not promoted and eligible:
            if ledger.frame_of[ev.self_parent] < frame_index:
                rooted = True
        ledger.register_event(ev, frame_index, rooted, table, promoted=promoted)
    if rooted:
        _exclude_forked_roots(ledger, chain)
        _clotho_pass_for_new_root(
            ledger, chain, ev.id, ledger.frame_of[ev.id], prev_top_frame
        )
        _advance_times_for_root(ledger, chain, ev.id, ledger.frame_of[ev.id])
        finalize_order(ledger, chain)
    return rooted


# -- Clotho selection -----------------------------------------------------


def _nominates(ledger: FrameLedger, chain: OperaChain, r: EventId, c: EventId) -> bool:
    """Does root r (three or more frames up) confirm candidate c as Clotho?

    Counts roots of c's next frame that both reach back to c and are
    visible to r; the answer depends only on r's subgraph.  A nominator
    whose ancestry exhibits a fork by c's creator never confirms c.
    """
    key = (r, c)
    cached = ledger._nominated.get(key)
    if cached is not None:
        return cached
    index = chain._index
    masks = chain._anc_mask
    c_idx = index[c]
    r_mask = masks[index[r]]
    count = 0
    for mid in ledger.roots_of(ledger.frame_of[c] + 1):
        mid_idx = index[mid]
        if (masks[mid_idx] >> c_idx) & 1 and (r_mask >> mid_idx) & 1:
            count += 1
    ok = 3 * count > 2 * ledger.n
    if ok:
        creator = chain.get(c).creator
        if chain.fork_visible_in(creator, r_mask):
            ok = False
    ledger._nominated[key] = ok
    return ok


def _denied(ledger: FrameLedger, chain: OperaChain, c: EventId) -> bool:
    """Locally detected fork bars the creator's roots from the forked seq on."""
    ev = chain.get(c)
    first = chain.first_fork_seq(ev.creator)
    return first is not None and ev.seq >= first


def _dead(ledger: FrameLedger, chain: OperaChain, c: EventId) -> bool:
    """No future nominator can confirm c: the confirmation quorum is
    unreachable once at least n/3 distinct creators are permanent
    non-supporters of c in the next frame.

    A creator permanently blocks c when its next-frame roots all fail to
    reach c, or when it skipped the next frame outright (frames are
    monotone along a self-parent chain, so it can never root there).
    Each creator contributes at most one root per frame, so the maximum
    confirmation count is n minus the blockers; 3 * blockers >= n caps it
    at 2n/3, below the strict threshold.  Creators with a locally known
    fork are never counted, which keeps the rule one-sided: a dead verdict
    here can never collide with a confirmation elsewhere.
    """
    next_frame = ledger.frame_of[c] + 1
    next_roots = ledger.roots_of(next_frame)
    forked = chain.forked_creators()
    index = chain._index
    masks = chain._anc_mask
    c_idx = index[c]
    reaching: set[int] = set()
    holding: set[int] = set()
    for rid in next_roots:
        creator = chain.get(rid).creator
        if creator in forked:
            continue
        holding.add(creator)
        if (masks[index[rid]] >> c_idx) & 1:
            reaching.add(creator)
    blockers = len(holding - reaching)
    for creator, top_frame in ledger._creator_max_frame.items():
        if creator in holding or creator in forked:
            continue
        if top_frame > next_frame:
            blockers += 1
    return 3 * blockers >= ledger.n


def _exclude_forked_roots(ledger: FrameLedger, chain: OperaChain) -> None:
    for creator in chain.forked_creators():
        first = chain.first_fork_seq(creator)
        for eid in chain.events_by(creator):
            if eid in ledger.root_ids and chain.get(eid).seq >= first:
                if ledger.clotho_check.get(eid) == RootStatus.CANDIDATE:
                    ledger.clotho_check[eid] = RootStatus.EXCLUDED


def _mark_clotho(ledger: FrameLedger, chain: OperaChain, candidates: list[EventId],
                 nominators: list[EventId]) -> set[EventId]:
    marked: set[EventId] = set()
    for c in candidates:
        if ledger.clotho_check.get(c) != RootStatus.CANDIDATE:
            continue
        if _denied(ledger, chain, c):
            ledger.clotho_check[c] = RootStatus.EXCLUDED
            continue
        for r in nominators:
            if _nominates(ledger, chain, r, c):
                ledger.clotho_check[c] = RootStatus.CLOTHO
                ledger._pending_clotho.add(c)
                marked.add(c)
                break
    return marked


def _mark_dead(ledger: FrameLedger, chain: OperaChain,
               candidates: list[EventId]) -> None:
    for c in candidates:
        if ledger.clotho_check.get(c) != RootStatus.CANDIDATE:
            continue
        if _dead(ledger, chain, c):
            ledger.clotho_check[c] = RootStatus.EXCLUDED


def _clotho_pass_for_new_root(ledger: FrameLedger, chain: OperaChain,
                              root: EventId, frame_index: int,
                              creator_prev_frame: int = 0) -> None:
    # The new root nominates every pending candidate at least three frames
    # below it; a candidate whose three-frames-up nominators saw too little
    # can still be confirmed by a later root with a wider view.
    start = max(1, ledger._next_emit_frame)
    for frame in range(start, frame_index - CLOTHO_LOOKAHEAD + 1):
        newly = _mark_clotho(ledger, chain, ledger.undecided_roots(frame), [root])
        for c in newly:
            # Roots above the candidate may long predate this marking.
            atropos_consensus_time(ledger, chain, c)
    # Dead-evidence changes only where this creator's frame progress moved:
    # candidates one below the new root, plus one below each frame the
    # creator just skipped.
    low = max(start, creator_prev_frame)
    for frame in range(low, frame_index):
        _mark_dead(ledger, chain, ledger.undecided_roots(frame))
    _mark_dead(ledger, chain, [root])


def select_clotho(ledger: FrameLedger, chain: OperaChain) -> set[EventId]:
    """Full Clotho sweep; returns the roots newly marked this call."""
    _exclude_forked_roots(ledger, chain)
    marked: set[EventId] = set()
    for frame_index in sorted(ledger.frames):
        nominators: list[EventId] = []
        for upper in range(frame_index + CLOTHO_LOOKAHEAD, ledger.max_frame + 1):
            nominators.extend(ledger.roots_of(upper))
        if nominators:
            marked |= _mark_clotho(
                ledger, chain, ledger.undecided_roots(frame_index), nominators
            )
        _mark_dead(ledger, chain, ledger.undecided_roots(frame_index))
    return marked


# -- Atropos consensus time ------------------------------------------------


def reselect(candidates: list[int]) -> int:
    """Smallest value among those with maximal multiplicity."""
    if not candidates:
        raise EmptyInput("no candidate times")
    counts: dict[int, int] = {}
    for value in candidates:
        counts[value] = counts.get(value, 0) + 1
    best = max(counts.values())
    return min(v for v, c in counts.items() if c == best)


def atropos_consensus_time(
    ledger: FrameLedger, chain: OperaChain, c: EventId, h: int | None = None
) -> int | None:
    """Run the candidate-time rounds for Clotho c; fix and return the
    consensus time once more than 2n/3 of gathered values agree (only on
    frames that are not a multiple of h past the Clotho), else None.

    Per-root candidate times are pure functions of each root's subgraph,
    so every node converges on the same value regardless of the frame at
    which it first observes the agreement.
    """
    status = ledger.clotho_check.get(c)
    if status == RootStatus.ATROPOS:
        return ledger.consensus_time[c]
    if status != RootStatus.CLOTHO:
        raise NotClotho(c.hex())
    if h is None:
        h = ledger.h
    a = ledger.frame_of[c]
    n = ledger.n
    for d in range(3, ledger.max_frame - a + 1):
        frame_roots = ledger.roots_of(a + d)
        prev_roots = ledger.roots_of(a + d - 1)
        for r in frame_roots:
            key = (r, c)
            if key in ledger.candidate_times:
                continue
            if d == 3:
                if _nominates(ledger, chain, r, c):
                    ledger.candidate_times[key] = chain.get(r).lamport_ts
                continue
            gathered = [
                ledger.candidate_times[(p, c)]
                for p in prev_roots
                if (p, c) in ledger.candidate_times and chain.happened_before(p, r)
            ]
            if not gathered:
                # No timed predecessor in view; a root that itself
                # confirms the Clotho seeds the time rounds instead.
                if _nominates(ledger, chain, r, c):
                    ledger.candidate_times[key] = chain.get(r).lamport_ts
                continue
            value = reselect(gathered)
            if d % h != 0:
                agreeing = gathered.count(value)
                if 3 * agreeing > 2 * n:
                    ledger.candidate_times[key] = value
                    _mark_atropos(ledger, c, value)
                    return value
                ledger.candidate_times[key] = value
            else:
                ledger.candidate_times[key] = min(gathered)
    return None


def _append_main_chain(ledger: FrameLedger, atropos: EventId, value: int) -> None:
    entry = MainChainEntry(ledger.frame_of[atropos], atropos, value)
    keys = [(e.frame, e.consensus_time, e.atropos) for e in ledger.main_chain]
    ledger.main_chain.insert(
        bisect.bisect_left(keys, (entry.frame, entry.consensus_time, entry.atropos)),
        entry,
    )


def _mark_atropos(ledger: FrameLedger, c: EventId, value: int) -> None:
    ledger.consensus_time[c] = value
    ledger.clotho_check[c] = RootStatus.ATROPOS
    ledger._pending_clotho.discard(c)
    _append_main_chain(ledger, c, value)


def _advance_times_for_root(ledger: FrameLedger, chain: OperaChain,
                            root: EventId, frame_index: int) -> None:
    """Candidate-time step for exactly the (new root, pending Clotho)
    pairs; every older pair was settled when its root arrived, so one
    root insertion adds at most one time per pending Clotho."""
    n = ledger.n
    h = ledger.h
    lamport = chain.get(root).lamport_ts
    for c in sorted(ledger._pending_clotho, key=lambda e: (ledger.frame_of[e], e)):
        a = ledger.frame_of[c]
        d = frame_index - a
        if d < 3:
            continue
        key = (root, c)
        if key in ledger.candidate_times:
            continue
        if d == 3:
            if _nominates(ledger, chain, root, c):
                ledger.candidate_times[key] = lamport
            continue
        index = chain._index
        root_mask = chain._anc_mask[index[root]]
        times = ledger.candidate_times
        gathered = [
            times[(p, c)]
            for p in ledger.roots_of(a + d - 1)
            if (p, c) in times and (root_mask >> index[p]) & 1
        ]
        if not gathered:
            if _nominates(ledger, chain, root, c):
                ledger.candidate_times[key] = lamport
            continue
        value = reselect(gathered)
        if d % h != 0:
            if 3 * gathered.count(value) > 2 * n:
                ledger.candidate_times[key] = value
                _mark_atropos(ledger, c, value)
                continue
            ledger.candidate_times[key] = value
        else:
            ledger.candidate_times[key] = min(gathered)


def _atropos_pass(ledger: FrameLedger, chain: OperaChain) -> None:
    pending = [
        eid
        for eid, status in ledger.clotho_check.items()
        if status == RootStatus.CLOTHO
    ]
    for c in sorted(pending, key=lambda e: (ledger.frame_of[e], e)):
        if ledger.frame_of[c] + 3 <= ledger.max_frame:
            atropos_consensus_time(ledger, chain, c)


# -- final ordering ---------------------------------------------------------


def finalize_order(ledger: FrameLedger, chain: OperaChain) -> list[EventId]:
    """Advance the finalized prefix and return the full ordered id list.

    A frame is emitted once every one of its roots is decided (Atropos or
    fork-excluded).  Within a frame, Atropos buckets are visited by
    (consensus time, id); a bucket holds every not-yet-ordered strict
    ancestor of its Atropos, sorted by (lamport, id).  Because frames are
    emitted in order and bucket contents are ancestry-closed, the emitted
    prefix never changes afterwards.
    """
    while True:
        frame = ledger.frames.get(ledger._next_emit_frame)
        if frame is None or not frame.root_set:
            break
        statuses = [ledger.clotho_check.get(r) for r in frame.root_set]
        if any(s not in DECIDED for s in statuses):
            break
        buckets = sorted(
            (ledger.consensus_time[r], r)
            for r in frame.root_set
            if ledger.clotho_check[r] == RootStatus.ATROPOS
        )
        for atropos_time, atropos in buckets:
            mask = chain.ancestry_mask(atropos) & ~ledger._finalized_mask
            members = sorted(
                (chain.id_at(i) for i in _bits(mask)),
                key=lambda eid: (chain.get(eid).lamport_ts, eid),
            )
            for eid in members:
                ledger.finalized.append(
                    OrderRecord(
                        position=len(ledger.finalized),
                        event=eid,
                        atropos_time=atropos_time,
                        lamport_ts=chain.get(eid).lamport_ts,
                    )
                )
                ledger._finalized_mask |= 1 << chain.index_of(eid)
        ledger._next_emit_frame += 1
    return [rec.event for rec in ledger.finalized]


def is_finalized(ledger: FrameLedger, chain: OperaChain, eid: EventId) -> bool:
    return bool((ledger._finalized_mask >> chain.index_of(eid)) & 1)


def prune_checklist(ledger: FrameLedger, frame_index: int) -> None:
    """Drop a fully finalized frame's root-set and checklist bookkeeping.

    The Main-chain records and the finalized order are retained untouched.
    """
    frame = ledger.frames.get(frame_index)
    if frame is None:
        raise FrameNotFinalized(f"frame {frame_index} unknown")
    if frame.pruned:
        return
    undecided = [
        r for r in frame.root_set if ledger.clotho_check.get(r) != RootStatus.ATROPOS
    ]
    if undecided:
        raise FrameNotFinalized(
            f"frame {frame_index} has {len(undecided)} non-Atropos roots"
        )
    if frame_index >= ledger._next_emit_frame:
        raise FrameNotFinalized(f"frame {frame_index} not yet emitted")
    for r in list(frame.root_set):
        ledger.clotho_check.pop(r, None)
    frame.root_set.clear()
    self_sorted = ledger._roots_sorted.get(frame_index)
    if self_sorted:
        self_sorted.clear()
    frame.pruned = True


def _bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low
