"""Brute-force reference implementations used by the test suite.

Everything here favors clarity over speed and deliberately avoids the
production shortcuts: reachability is plain BFS over reverse edges, root
and frame computation walks the DAG without flag tables, and the
dominator-based root characterization recomputes dominance inside each
candidate's induced subgraph.  Quadratic or cubic cost is fine at test
scale.
"""

from __future__ import annotations

import random
from collections import deque

from .chain import OperaChain
from .errors import UnknownEvent
from .events import EventId

# Pseudo vertex above every tip; dominance paths start here.
TOP = b"\xff" * 32


def bfs_ancestors(chain: OperaChain, v: EventId) -> set[EventId]:
    """Exhaustive reverse-edge BFS; strict (v itself excluded)."""
    if v not in chain:
        raise UnknownEvent(v.hex())
    seen: set[EventId] = set()
    queue = deque(chain.get(v).parents)
    while queue:
        cur = queue.popleft()
        if cur in seen:
            continue
        seen.add(cur)
        queue.extend(chain.get(cur).parents)
    return seen


def bfs_descendants(chain: OperaChain, v: EventId) -> set[EventId]:
    if v not in chain:
        raise UnknownEvent(v.hex())
    seen: set[EventId] = set()
    queue = deque(chain.children.get(v, ()))
    while queue:
        cur = queue.popleft()
        if cur in seen:
            continue
        seen.add(cur)
        queue.extend(chain.children.get(cur, ()))
    return seen


def naive_forks(chain: OperaChain, creator: int) -> list[tuple[EventId, EventId]]:
    """All same-creator pairs where neither is a self-ancestor of the other."""
    ids = sorted(chain.events_by(creator))
    pairs = []
    for i, x in enumerate(ids):
        for y in ids[i + 1 :]:
            if not _self_reachable(chain, x, y) and not _self_reachable(chain, y, x):
                pairs.append((x, y))
    return pairs


def _self_reachable(chain: OperaChain, anc: EventId, desc: EventId) -> bool:
    cur = chain.get(desc).self_parent
    while cur is not None:
        if cur == anc:
            return True
        cur = chain.get(cur).self_parent
    return False


def _naive_pipeline(chain: OperaChain, n: int) -> tuple[list[set[EventId]], dict[EventId, int]]:
    """Frame-by-frame root sets and frame numbers, without flag tables.

    Events are processed in topological order; an event's frame is the max
    of its parents' frames.  The event is promoted into the next frame's
    root set when BFS reachability shows it reaches more than 2n/3 of the
    current frame's roots; failing that, a creator's first event at an
    inherited frame joins that frame's root set (it reaches the previous
    frame's quorum through the frame ancestor it inherited from).
    Mirrors the production exclusion rules: roots reached through both
    branches of a fork cancel out, and an event whose own ancestry holds a
    fork by its creator is never a root.
    """
    frames: dict[EventId, int] = {}
    root_sets: list[set[EventId]] = [set()]
    events = sorted(chain.in_insertion_order(), key=lambda e: (e.lamport_ts, e.id))
    fork_pairs = {c: naive_forks(chain, c) for c in range(n)}
    for ev in events:
        if ev.is_leaf:
            frames[ev.id] = 1
            root_sets[0].add(ev.id)
            continue
        ancestors = bfs_ancestors(chain, ev.id)
        latest = max(frames[pid] for pid in ev.parents)
        reached = {r for r in root_sets[latest - 1] if r in ancestors}
        per_creator: dict[int, int] = {}
        for r in reached:
            rc = chain.get(r).creator
            per_creator[rc] = per_creator.get(rc, 0) + 1
        reached = {r for r in reached if per_creator[chain.get(r).creator] == 1}
        closure = ancestors | {ev.id}
        eligible = not any(
            a in closure and b in closure for a, b in fork_pairs.get(ev.creator, ())
        )
        if eligible and 3 * len(reached) > 2 * n:
            frames[ev.id] = latest + 1
            if len(root_sets) < latest + 1:
                root_sets.append(set())
            root_sets[latest].add(ev.id)
        elif eligible and frames[ev.self_parent] < latest:
            frames[ev.id] = latest
            root_sets[latest - 1].add(ev.id)
        else:
            frames[ev.id] = latest
    return root_sets, frames


def naive_roots(chain: OperaChain, n: int) -> list[set[EventId]]:
    return _naive_pipeline(chain, n)[0]


def naive_frames(chain: OperaChain, n: int) -> dict[EventId, int]:
    return _naive_pipeline(chain, n)[1]


# -- dominators -------------------------------------------------------------


def dominator_sets(
    chain: OperaChain, inside: set[EventId] | None = None
) -> dict[EventId, set[EventId]]:
    """Full dominator sets rooted at the pseudo top above every tip.

    Iterative dataflow: dom(v) = {v} union intersection of dom(p) over the
    top-down predecessors of v (the events referencing v, or the pseudo
    top when none does).  Optionally restricted to an induced vertex set.
    """
    if inside is None:
        vertices = list(chain.in_insertion_order())
        member = set(chain.events)
    else:
        member = set(inside)
        vertices = [ev for ev in chain.in_insertion_order() if ev.id in member]
    preds: dict[EventId, set[EventId]] = {}
    for ev in vertices:
        incoming = {c for c in chain.children.get(ev.id, ()) if c in member}
        preds[ev.id] = incoming if incoming else {TOP}
    dom: dict[EventId, set[EventId]] = {ev.id: member | {TOP} for ev in vertices}
    dom[TOP] = {TOP}
    # Children precede parents top-down, so sweep in reverse insertion order.
    sweep = [ev.id for ev in reversed(vertices)]
    changed = True
    while changed:
        changed = False
        for v in sweep:
            new = set.intersection(*(dom[p] for p in preds[v]))
            new.add(v)
            if new != dom[v]:
                dom[v] = new
                changed = True
    return dom


def dominator_tree(chain: OperaChain) -> dict[EventId, EventId]:
    """Immediate dominator for every event; the pseudo top roots the tree."""
    dom = dominator_sets(chain)
    size: dict[EventId, int] = {v: len(d) for v, d in dom.items()}
    idom: dict[EventId, EventId] = {}
    for v, dset in dom.items():
        if v == TOP:
            continue
        strict = dset - {v}
        # Immediate dominator: the strict dominator dominated by all the
        # others, i.e. the one with the largest dominator set.
        idom[v] = max(strict, key=lambda w: (size[w], w))
    return idom


def dominance_frontier(chain: OperaChain) -> dict[EventId, set[EventId]]:
    """DF(v): vertices with a top-down predecessor dominated by v that v
    does not strictly dominate."""
    dom = dominator_sets(chain)
    frontier: dict[EventId, set[EventId]] = {v: set() for v in dom}
    for x in chain.events:
        preds = set(chain.children.get(x, ())) or {TOP}
        for p in preds:
            for d in dom[p]:
                if d != TOP and (d == x or d not in dom[x]):
                    frontier[d].add(x)
    return frontier


def dominates_in_subgraph(
    chain: OperaChain, v_d: EventId, targets: set[EventId]
) -> set[EventId]:
    """Members of targets dominated by v_d inside v_d's induced subgraph."""
    inside = bfs_ancestors(chain, v_d) | {v_d}
    dom = dominator_sets(chain, inside)
    return {t for t in targets if t in inside and v_d in dom[t]}


def two_thirds_dom_sets(chain: OperaChain, n: int) -> list[set[EventId]]:
    """Iterated 2/3-domination sets, starting from the leaf set.

    D_0 is the leaf set.  Events are walked in topological order carrying
    a level (the max of their parents' levels, as for frames): an event
    joins D_L when it 2/3-dominates D_{L-1} within its own induced
    subgraph, opening level L+1; failing that, a creator's first event at
    an inherited level joins that level's set, with the same subgraph
    domination requirement.  The quorum is measured against n, the same
    base the root rule uses, and fork handling mirrors the root rules:
    dominated members whose creator shows twice cancel out, and an event
    carrying a fork by its own creator never joins.
    """
    levels: dict[EventId, int] = {}
    sets: list[set[EventId]] = [set(chain.leaf_set)]
    events = sorted(chain.in_insertion_order(), key=lambda e: (e.lamport_ts, e.id))
    fork_pairs = {c: naive_forks(chain, c) for c in range(n)}
    for ev in events:
        if ev.is_leaf:
            levels[ev.id] = 1
            continue
        latest = max(levels[pid] for pid in ev.parents)
        prev = sets[latest - 1] if latest - 1 < len(sets) else set()
        dominated = dominates_in_subgraph(chain, ev.id, set(prev))
        per_creator: dict[int, int] = {}
        for r in dominated:
            rc = chain.get(r).creator
            per_creator[rc] = per_creator.get(rc, 0) + 1
        dominated = {r for r in dominated if per_creator[chain.get(r).creator] == 1}
        closure = bfs_ancestors(chain, ev.id) | {ev.id}
        eligible = not any(
            a in closure and b in closure for a, b in fork_pairs.get(ev.creator, ())
        )
        if eligible and 3 * len(dominated) > 2 * n:
            levels[ev.id] = latest + 1
            if len(sets) < latest + 1:
                sets.append(set())
            sets[latest].add(ev.id)
        elif eligible and levels[ev.self_parent] < latest:
            # First event of its creator at the inherited level; membership
            # still demands 2/3-domination of the level below.
            below = sets[latest - 2] if latest >= 2 else set()
            held = dominates_in_subgraph(chain, ev.id, set(below))
            counts: dict[int, int] = {}
            for r in held:
                rc = chain.get(r).creator
                counts[rc] = counts.get(rc, 0) + 1
            held = {r for r in held if counts[chain.get(r).creator] == 1}
            levels[ev.id] = latest
            if 3 * len(held) > 2 * n:
                sets[latest - 1].add(ev.id)
        else:
            levels[ev.id] = latest
    return sets


def sample_paths_contain_idom(
    chain: OperaChain,
    v: EventId,
    idom: dict[EventId, EventId],
    rng: random.Random,
    samples: int = 100,
) -> bool:
    """Check that random top-to-v walks all pass through idom(v).

    A walk starts at a uniformly chosen tip that can reach v and descends
    through parents that still reach v, which enumerates exactly the
    pseudo-top-to-v paths.
    """
    target = idom[v]
    if target == TOP:
        return True
    reaches_v = bfs_descendants(chain, v) | {v}
    sources = [t for t in chain.graph_tips() if t in reaches_v]
    for _ in range(samples):
        cur = rng.choice(sources)
        path = [cur]
        while cur != v:
            options = sorted(p for p in chain.get(cur).parents if p in reaches_v)
            cur = rng.choice(options)
            path.append(cur)
        if target not in path:
            return False
    return True
