"""Command line front end: simulate, verify, export-dot.

Exit codes: 0 success, 1 failed checks or audit violations, 2 usage or
input errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .chain import OperaChain
from .consensus import FrameLedger, process_event
from .dotexport import consensus_dot
from .errors import ConfigInvalid, LachesisError, MissingParent
from .eventlog import read_event_log, write_event_log, write_jsonl_log
from .oracle import naive_frames, naive_forks, naive_roots, two_thirds_dom_sets
from .sim import SimConfig, _build_report, run_world


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="lachesis",
        description="OPERA-chain consensus simulator and verification tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a seeded multi-node simulation")
    p_sim.add_argument("--config", required=True, help="JSON or key=value config file")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--seed", type=int, default=None, help="override config seed")
    p_sim.add_argument(
        "--format",
        choices=("json", "csv", "dot"),
        action="append",
        default=None,
        help="artifact kinds to write (default: all)",
    )

    p_verify = sub.add_parser("verify", help="cross-check a recorded event log")
    p_verify.add_argument("log", help="binary event log")
    p_verify.add_argument("--n", type=int, default=None, help="node count override")
    p_verify.add_argument("--k", type=int, default=None, help="reference count override")
    p_verify.add_argument("--h", type=int, default=10, help="reselection period")

    p_dot = sub.add_parser("export-dot", help="render a recorded log as DOT")
    p_dot.add_argument("log", help="binary event log")
    p_dot.add_argument("--frames", default=None, help="inclusive range a..b")
    p_dot.add_argument("--out", default="-", help="output file (default stdout)")
    p_dot.add_argument("--n", type=int, default=None)
    p_dot.add_argument("--k", type=int, default=None)

    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "verify":
            return _cmd_verify(args)
        return _cmd_export_dot(args)
    except (ConfigInvalid, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _cmd_simulate(args) -> int:
    config = SimConfig.from_file(args.config)
    if args.seed is not None:
        config.seed = args.seed
    config.validate()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    formats = set(args.format or ("json", "csv", "dot"))

    trace_lines: list[str] = []
    world = run_world(config, trace_writer=trace_lines.append)
    report = _build_report(world)

    (out / "report.json").write_text(report.to_json() + "\n")
    with open(out / "trace.jsonl", "w") as fh:
        for line in trace_lines:
            fh.write(line + "\n")

    chain = world.nodes[0].chain
    ledger = world.nodes[0].ledger
    write_event_log(chain.in_insertion_order(), out / "events.bin")
    write_jsonl_log(chain.in_insertion_order(), out / "events.jsonl")
    if "json" in formats:
        with open(out / "main_chain.jsonl", "w") as fh:
            for rec in ledger.main_chain_records():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        with open(out / "order.jsonl", "w") as fh:
            for rec in ledger.order_records():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    if "csv" in formats:
        with open(out / "stats.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["round", "frames", "roots", "clothos", "atropos", "finalized_count"]
            )
            writer.writerows(world.round_rows)
    if "dot" in formats:
        dot_dir = out / "frames"
        dot_dir.mkdir(exist_ok=True)
        for frame in range(1, ledger.max_frame + 1):
            text = consensus_dot(chain, ledger, (frame, frame))
            (dot_dir / f"frame_{frame:04d}.dot").write_text(text)
        (out / "chain.dot").write_text(consensus_dot(chain, ledger))

    violations = report.violations
    print(
        f"simulate: n={config.n} k={config.k} seed={config.seed} "
        f"events={report.events_created} frames={report.per_node[0]['frames']} "
        f"atropos={report.per_node[0]['atropos']} violations={len(violations)}"
    )
    for v in violations:
        print(f"  violation: {v}")
    return 1 if violations else 0


def _rebuild(events, n: int, k: int, h: int) -> tuple[OperaChain, FrameLedger]:
    chain = OperaChain(n, k)
    ledger = FrameLedger(n, k, h)
    pending = sorted(events, key=lambda e: (e.lamport_ts, e.id))
    for ev in pending:
        chain.insert_event(ev)
        process_event(ledger, chain, ev)
    return chain, ledger


def _infer_params(events) -> tuple[int, int]:
    n = max(ev.creator for ev in events) + 1
    k = 1
    for ev in events:
        if not ev.is_leaf:
            k = max(k, len(ev.other_parents) + 1)
    return n, max(k, 2)


def _cmd_verify(args) -> int:
    events = read_event_log(args.log)
    if not events:
        print("error: empty log", file=sys.stderr)
        return 1
    n_guess, k_guess = _infer_params(events)
    n = args.n or n_guess
    k = args.k or k_guess
    try:
        chain, ledger = _rebuild(events, n, k, args.h)
    except MissingParent as exc:
        print(f"verify: FAIL MissingParent {exc}", file=sys.stderr)
        return 1
    except LachesisError as exc:
        print(f"verify: FAIL {type(exc).__name__} {exc}", file=sys.stderr)
        return 1

    checks: list[tuple[str, bool, str]] = []

    oracle_roots = naive_roots(chain, n)
    ledger_roots = [
        set(ledger.roots_of(i)) for i in range(1, ledger.max_frame + 1)
    ]
    oracle_trimmed = [s for s in oracle_roots if s]
    checks.append(
        (
            "roots-vs-oracle",
            ledger_roots == oracle_trimmed,
            f"{len(ledger_roots)} frames",
        )
    )

    oracle_frame = naive_frames(chain, n)
    frames_ok = all(
        ledger.frame_of.get(eid) == oracle_frame.get(eid) for eid in chain.events
    )
    checks.append(("frames-vs-oracle", frames_ok, f"{len(chain)} events"))

    has_forks = False
    for creator in range(n):
        pairs = chain.detect_forks(creator)
        oracle_pairs = naive_forks(chain, creator)
        checks.append(
            (
                f"fork-scan-node-{creator}",
                pairs == oracle_pairs,
                f"{len(pairs)} pairs",
            )
        )
        if pairs:
            has_forks = True
            print(f"fork report: creator {creator} has {len(pairs)} fork pairs")
    if not has_forks:
        dom_sets = two_thirds_dom_sets(chain, n)
        aligned = min(len(dom_sets), len(oracle_trimmed))
        dom_ok = all(dom_sets[i] == oracle_trimmed[i] for i in range(aligned))
        dom_ok = dom_ok and len(dom_sets) == len(oracle_trimmed)
        checks.append(("dom-sets-vs-roots", dom_ok, f"{len(dom_sets)} levels"))

    # Order recomputation: a second replay in a different insertion order
    # must produce the identical finalized order.
    alt_order = sorted(events, key=lambda e: (e.creator, e.seq, e.lamport_ts, e.id))
    alt_sorted = _topological(alt_order)
    chain2 = OperaChain(n, k)
    ledger2 = FrameLedger(n, k, args.h)
    for ev in alt_sorted:
        chain2.insert_event(ev)
        process_event(ledger2, chain2, ev)
    order_a = [rec.event for rec in ledger.finalized]
    order_b = [rec.event for rec in ledger2.finalized]
    checks.append(("order-recomputation", order_a == order_b, f"{len(order_a)} events"))

    failed = [name for name, ok, _ in checks if not ok]
    for name, ok, detail in checks:
        print(f"verify: {'ok  ' if ok else 'FAIL'} {name} ({detail})")
    if failed:
        print(f"verify: first failing check: {failed[0]}", file=sys.stderr)
        return 1
    return 0


def _topological(events):
    """Stable parent-first ordering of an arbitrary event list."""
    by_id = {ev.id: ev for ev in events}
    placed: set = set()
    out = []
    def visit(ev):
        if ev.id in placed:
            return
        for pid in ev.parents:
            if pid in by_id:
                visit(by_id[pid])
        placed.add(ev.id)
        out.append(ev)
    for ev in events:
        visit(ev)
    return out


def _cmd_export_dot(args) -> int:
    events = read_event_log(args.log)
    if not events:
        print("error: empty log", file=sys.stderr)
        return 2
    n_guess, k_guess = _infer_params(events)
    n = args.n or n_guess
    k = args.k or k_guess
    try:
        chain, ledger = _rebuild(events, n, k, 10)
    except LachesisError as exc:
        print(f"error: {type(exc).__name__} {exc}", file=sys.stderr)
        return 2
    frame_range = None
    if args.frames is not None:
        try:
            lo_s, hi_s = args.frames.split("..", 1)
            lo, hi = int(lo_s), int(hi_s)
        except ValueError:
            print(f"error: bad frame range {args.frames!r}", file=sys.stderr)
            return 2
        if lo <= hi and (lo < 1 or hi > max(ledger.max_frame, 1)):
            print(
                f"error: unknown frames {args.frames} (have 1..{ledger.max_frame})",
                file=sys.stderr,
            )
            return 2
        frame_range = (lo, hi)
    text = consensus_dot(chain, ledger, frame_range)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
