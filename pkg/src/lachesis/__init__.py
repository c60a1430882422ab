"""DAG-based asynchronous BFT consensus over an OPERA chain.

Event blocks gossip between nodes, flag tables promote events to frame
roots, roots graduate to Clotho and then Atropos blocks, and the Atropos
Main-chain anchors a total order over all events.  A deterministic
discrete-event simulator drives multi-node runs, and brute-force oracles
cross-check every structural claim at test scale.
"""

from .chain import OperaChain
from .consensus import (
    FlagTable,
    Frame,
    FrameLedger,
    MainChainEntry,
    OrderKey,
    OrderRecord,
    RootStatus,
    assign_frame,
    atropos_consensus_time,
    check_root,
    compute_flag_table,
    finalize_order,
    process_event,
    prune_checklist,
    reselect,
    select_clotho,
)
from .errors import (
    ConfigInvalid,
    DuplicateEvent,
    EmptyInput,
    FrameNotFinalized,
    InsufficientPeers,
    LachesisError,
    MalformedReferences,
    MissingParent,
    MissingParentTable,
    NotClotho,
    StaleTops,
    UnknownEvent,
)
from .events import EventBlock, EventId, assign_lamport, build_event, event_id
from .peering import (
    NodeBook,
    SyncMessage,
    cost,
    create_event,
    event_diff,
    handle_sync,
    observe_event,
    select_peers,
)
from .sim import SimConfig, SimReport, audit, run

__all__ = [
    "OperaChain",
    "FlagTable",
    "Frame",
    "FrameLedger",
    "MainChainEntry",
    "OrderKey",
    "OrderRecord",
    "RootStatus",
    "assign_frame",
    "atropos_consensus_time",
    "check_root",
    "compute_flag_table",
    "finalize_order",
    "process_event",
    "prune_checklist",
    "reselect",
    "select_clotho",
    "EventBlock",
    "EventId",
    "assign_lamport",
    "build_event",
    "event_id",
    "NodeBook",
    "SyncMessage",
    "cost",
    "create_event",
    "event_diff",
    "handle_sync",
    "observe_event",
    "select_peers",
    "SimConfig",
    "SimReport",
    "audit",
    "run",
    "LachesisError",
    "ConfigInvalid",
    "DuplicateEvent",
    "EmptyInput",
    "FrameNotFinalized",
    "InsufficientPeers",
    "MalformedReferences",
    "MissingParent",
    "MissingParentTable",
    "NotClotho",
    "StaleTops",
    "UnknownEvent",
]

__version__ = "0.1.0"
