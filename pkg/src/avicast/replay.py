"""Re-check run invariants against a saved trace, without re-running anything.

Works purely from the trace text: reconstructs sleep, departure and group
membership from the records themselves and verifies

  time-order     t non-decreasing, seq strictly increasing
  avi-safety     every answer satisfies ts + avi > t (multicast strategy)
  conservation   every send is delivered exactly once per addressed recipient
                 or logged as a drop; nothing is lost before the horizon and
                 nothing arrives unsent
  causality      deliveries arrive exactly one channel latency after the send
  sleep/roam     deliveries never reach sleeping or departed clients, and
                 drops carry the matching reason
  single-leader  at most one live agent; after the agent roams, the next
                 election promotes the previously announced successor
  routing        after a client learns the agent it never queries the base
                 station directly (unless it is the agent itself)
  latency-match  every answer's latency equals now minus a matching
                 outstanding query
  ir-rule        report count equals the number of interval reductions at the
                 base station (multicast strategy)
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional

from .core import NodeId, NodeKind, parse_node
from .trace import TraceFormatError, TraceRecord, parse_header, parse_line

CHECKS = (
    "time-order",
    "avi-safety",
    "conservation",
    "causality",
    "sleep-roam-drops",
    "single-leader",
    "routing",
    "latency-match",
    "ir-rule",
)


class TraceCheckError(Exception):
    def __init__(self, check: str, lineno: int, detail: str):
        self.check = check
        self.lineno = lineno
        self.detail = detail
        super().__init__(f"invariant {check!r} violated at trace line {lineno}: {detail}")


@dataclass
class ParsedTrace:
    header: dict[str, str]
    records: list[TraceRecord]  # record i is trace line i + 2


def load_trace(text: str) -> ParsedTrace:
    lines = text.splitlines()
    if not lines:
        raise TraceFormatError("empty trace")
    header = parse_header(lines[0])
    records = [parse_line(line, i + 2) for i, line in enumerate(lines[1:])]
    return ParsedTrace(header, records)


def _msg_key(rec: TraceRecord) -> tuple:
    return tuple((k, v) for k, v in rec.fields if k not in ("ch", "to", "src", "reason"))


def check_trace(trace: ParsedTrace) -> dict[str, int]:
    """Run every check; raises TraceCheckError on the first violation.

    Returns per-check observation counts (how many records each check saw),
    useful for reporting.
    """
    hdr = trace.header
    strategy = hdr["strategy"]
    horizon = int(hdr["horizon"])
    num_clients = int(hdr["num_clients"])
    latency = {
        "up": int(hdr["d_up"]),
        "down": int(hdr["d_down"]),
        "bc": int(hdr["d_down"]),
        "mc": int(hdr["d_mc"]),
        "peer": int(hdr["d_peer"]),
        "wire": int(hdr["d_wire"]),
    }
    seen = Counter()

    all_clients = [NodeId(NodeKind.CLIENT, i) for i in range(1, num_clients + 1)]
    asleep: set[NodeId] = set()
    departed: set[NodeId] = set()
    joined: set[NodeId] = set()
    known_dta: dict[NodeId, Optional[NodeId]] = {}
    live_dta: Optional[NodeId] = None
    bs_dta: Optional[NodeId] = None
    bs_successor: Optional[NodeId] = None
    # (arrival_t, to, src, ch, msg_key) -> outstanding count
    expected: Counter = Counter()
    pending: dict[tuple[NodeId, str], Counter] = {}
    reductions = 0
    ir_sends = 0

    prev_t = -1
    prev_seq = -1
    for idx, rec in enumerate(trace.records):
        lineno = idx + 2
        seen["time-order"] += 1
        if rec.t < prev_t:
            raise TraceCheckError("time-order", lineno, f"t went back from {prev_t} to {rec.t}")
        if rec.seq <= prev_seq:
            raise TraceCheckError("time-order", lineno, f"seq not increasing: {prev_seq} -> {rec.seq}")
        prev_t, prev_seq = rec.t, rec.seq

        ev = rec.ev
        if ev == "send":
            ch = rec.get("ch")
            key = _msg_key(rec)
            if ch == "bc":
                targets = [c for c in all_clients if c not in departed]
            elif ch == "mc":
                targets = [c for c in all_clients if c in joined and c not in departed]
            elif ch == "up":
                targets = [parse_node(rec.get("to"))]
            elif ch == "wire":
                targets = [parse_node(rec.get("to"))]
            else:
                targets = [parse_node(rec.get("to"))]
            for to in targets:
                expected[(rec.t + latency[ch], to, rec.node, ch, key)] += 1
            seen["conservation"] += 1
            if rec.get("msg") == "ir" and rec.node.kind is NodeKind.BASE_STATION:
                ir_sends += 1
            if rec.get("msg") == "query" and ch == "up" and rec.node.kind is NodeKind.CLIENT:
                seen["routing"] += 1
                dta = known_dta.get(rec.node)
                if dta is not None and dta != rec.node:
                    raise TraceCheckError(
                        "routing",
                        lineno,
                        f"{rec.node} queried the base station after learning agent {dta}",
                    )

        elif ev in ("recv", "drop"):
            ch = rec.get("ch")
            src = parse_node(rec.get("src"))
            key = (rec.t, rec.node, src, ch, _msg_key(rec))
            seen["conservation"] += 1
            seen["causality"] += 1
            if expected[key] <= 0:
                raise TraceCheckError(
                    "conservation",
                    lineno,
                    f"delivery with no matching send (or duplicate): {rec.line()}",
                )
            expected[key] -= 1
            seen["sleep-roam-drops"] += 1
            if ev == "recv":
                if rec.node in asleep:
                    raise TraceCheckError(
                        "sleep-roam-drops", lineno, f"delivery to sleeping {rec.node}"
                    )
                if rec.node in departed:
                    raise TraceCheckError(
                        "sleep-roam-drops", lineno, f"delivery to departed {rec.node}"
                    )
                if rec.get("msg") == "announce":
                    dta = parse_node(rec.get("dta"))
                    known_dta[rec.node] = dta
                    if dta == rec.node:
                        seen["single-leader"] += 1
                        if live_dta is not None and live_dta != rec.node and live_dta not in departed:
                            raise TraceCheckError(
                                "single-leader",
                                lineno,
                                f"{rec.node} named agent while {live_dta} still live",
                            )
                        live_dta = rec.node
                        joined.discard(rec.node)
                    else:
                        joined.add(rec.node)
                elif rec.get("msg") == "redirect":
                    known_dta[rec.node] = parse_node(rec.get("dta"))
            else:
                reason = rec.get("reason")
                if reason == "sleep" and rec.node not in asleep:
                    raise TraceCheckError(
                        "sleep-roam-drops", lineno, f"sleep-drop for awake {rec.node}"
                    )
                if reason == "roam" and rec.node not in departed:
                    raise TraceCheckError(
                        "sleep-roam-drops", lineno, f"roam-drop for present {rec.node}"
                    )

        elif ev == "query":
            pending.setdefault((rec.node, rec.get("item")), Counter())[rec.t] += 1

        elif ev == "answer":
            seen["latency-match"] += 1
            lat = int(rec.get("latency"))
            issue = rec.t - lat
            bucket = pending.get((rec.node, rec.get("item")))
            if not bucket or bucket[issue] <= 0:
                raise TraceCheckError(
                    "latency-match",
                    lineno,
                    f"answer latency {lat} matches no outstanding query at t={issue}",
                )
            bucket[issue] -= 1
            if strategy == "dta-multicast":
                seen["avi-safety"] += 1
                if int(rec.get("ts")) + int(rec.get("avi")) <= rec.t:
                    raise TraceCheckError(
                        "avi-safety",
                        lineno,
                        f"answered at t={rec.t} with window ending at "
                        f"{int(rec.get('ts')) + int(rec.get('avi'))}",
                    )

        elif ev == "avi":
            old = rec.get("old")
            if old != "none" and int(rec.get("new")) < int(old):
                reductions += 1

        elif ev == "elect":
            seen["single-leader"] += 1
            dta = parse_node(rec.get("dta"))
            succ = rec.get("successor")
            if bs_dta is not None and bs_dta in departed and bs_successor is not None:
                if dta != bs_successor:
                    raise TraceCheckError(
                        "single-leader",
                        lineno,
                        f"agent after roam is {dta}, announced successor was {bs_successor}",
                    )
            bs_dta = dta
            bs_successor = None if succ == "none" else parse_node(succ)

        elif ev == "sleep":
            asleep.add(rec.node)
        elif ev == "wake":
            asleep.discard(rec.node)
        elif ev == "roam":
            departed.add(rec.node)
            if rec.node == live_dta:
                live_dta = None

    for (arrival, to, src, ch, key), count in expected.items():
        if count > 0 and arrival <= horizon:
            raise TraceCheckError(
                "conservation",
                len(trace.records) + 1,
                f"message from {src} to {to} via {ch} due t={arrival} was never "
                f"delivered or dropped: {key}",
            )

    seen["ir-rule"] += 1
    if strategy == "dta-multicast" and ir_sends != reductions:
        raise TraceCheckError(
            "ir-rule",
            len(trace.records) + 1,
            f"{ir_sends} reports sent but {reductions} interval reductions recorded",
        )
    return dict(seen)
