"""Graphviz DOT rendering of OPERA chains.

Two flavors: a bare chain view (vertices labeled creator:seq, solid
self-parent edges, dashed peer references) and a consensus view that
colors events by frame and outlines roots, Clothos and Atropos blocks.
Output is fully sorted so identical inputs render identical files.
"""

from __future__ import annotations

from .chain import OperaChain
from .consensus import FrameLedger, RootStatus
from .events import EventId

# Fill colors cycled by frame number.
_FRAME_COLORS = (
    "lightblue",
    "palegreen",
    "lightsalmon",
    "plum",
    "khaki",
    "lightcyan",
    "mistyrose",
    "honeydew",
)


def _label(chain: OperaChain, eid: EventId) -> str:
    ev = chain.get(eid)
    return f"{ev.creator}:{ev.seq}"


def _node_name(eid: EventId) -> str:
    return "e" + eid.hex()[:12]


def chain_dot(chain: OperaChain) -> str:
    """Plain structural rendering of a chain."""
    lines = ["digraph opera {", "  rankdir=RL;", '  node [shape=circle, fontsize=10];']
    for eid in sorted(chain.events):
        lines.append(f'  {_node_name(eid)} [label="{_label(chain, eid)}"];')
    for eid in sorted(chain.events):
        ev = chain.get(eid)
        if ev.self_parent is not None:
            lines.append(f"  {_node_name(eid)} -> {_node_name(ev.self_parent)};")
        for pid in sorted(ev.other_parents):
            lines.append(f"  {_node_name(eid)} -> {_node_name(pid)} [style=dashed];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def consensus_dot(
    chain: OperaChain,
    ledger: FrameLedger,
    frame_range: tuple[int, int] | None = None,
) -> str:
    """Frame-colored rendering with root/Clotho/Atropos outlines.

    ``frame_range`` is inclusive; a reversed range selects nothing and
    renders a header-only graph.
    """
    def included(eid: EventId) -> bool:
        if frame_range is None:
            return True
        lo, hi = frame_range
        return lo <= ledger.frame_of.get(eid, 0) <= hi

    lines = ["digraph opera {", "  rankdir=RL;", '  node [shape=circle, fontsize=10];']
    selected = [eid for eid in sorted(chain.events) if included(eid)]
    for eid in selected:
        frame = ledger.frame_of.get(eid, 0)
        color = _FRAME_COLORS[(frame - 1) % len(_FRAME_COLORS)] if frame else "white"
        attrs = [
            f'label="{_label(chain, eid)}"',
            "style=filled",
            f"fillcolor={color}",
        ]
        status = ledger.status_of(eid)
        if status is RootStatus.ATROPOS:
            attrs += ["shape=doublecircle", "penwidth=3", "color=red"]
        elif status is RootStatus.CLOTHO:
            attrs += ["shape=doublecircle", "penwidth=2", "color=blue"]
        elif status is RootStatus.EXCLUDED:
            attrs += ["penwidth=2", "color=gray", "style=\"filled,dashed\""]
        elif ledger.is_root(eid):
            attrs += ["penwidth=2", "color=black"]
        lines.append(f"  {_node_name(eid)} [{', '.join(attrs)}];")
    member = set(selected)
    for eid in selected:
        ev = chain.get(eid)
        if ev.self_parent in member:
            lines.append(f"  {_node_name(eid)} -> {_node_name(ev.self_parent)};")
        for pid in sorted(ev.other_parents):
            if pid in member:
                lines.append(f"  {_node_name(eid)} -> {_node_name(pid)} [style=dashed];")
    lines.append("}")
    return "\n".join(lines) + "\n"
