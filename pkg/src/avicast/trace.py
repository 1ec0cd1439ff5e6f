"""Run trace: record types, the line format, and parsing for replay.

Format contract (bit-exact across platforms):

    # avicast-trace v1 strategy=<s> seed=<n> num_clients=<n> num_items=<n> \
horizon=<n> d_up=<n> d_down=<n> d_mc=<n> d_peer=<n> d_wire=<n> config=<digest>
    t=<ticks> seq=<n> node=<kind:idx> ev=<name> <key=value ...>

One line per trace record, `seq` strictly increasing, keys in a fixed
documented order per event kind:

    send      ch= to= msg= <message fields>
    recv      ch= src= msg= <message fields>
    drop      reason= ch= src= msg= <message fields>
    query     item=
    skip      reason= item=
    answer    item= version= source= latency= ts= avi= stale=
    update    item= version=
    avi       item= old= new= ts=
    lease     item= old= new= end=
    elect     dta= successor=
    sleep / wake / roam / timeout          (no fields)
    ir-tick   window=
    purge     items=
    violation what= [message fields]

Message fields, by msg= kind:

    candidacy    from= score=
    announce     dta= successor= group=
    query        item= from=
    redirect     dta=
    data         item= version= avi= ts=        (valid-data reply)
    mcast        item= version= avi= ts=
    ir           entries=<item:avi:ts;...|->
    supdate      item= version= ts=
    register     from=
    roam-notice  from=
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .core import (
    CandidacyReport,
    DtaAnnouncement,
    InvalidationReport,
    IrEntry,
    MulticastUpdate,
    NodeId,
    ProtocolMessage,
    Query,
    Redirect,
    Register,
    RoamNotice,
    ServerUpdate,
    ValidData,
    node_label,
)

TRACE_HEADER_PREFIX = "# avicast-trace v1"

Fields = tuple[tuple[str, str], ...]


@dataclass
class Rec:
    """A record as produced by a node or the engine, before timestamping."""

    ev: str
    fields: list[tuple[str, str]]


@dataclass(slots=True)
class TraceRecord:
    t: int
    seq: int
    node: NodeId
    ev: str
    fields: Fields

    def line(self) -> str:
        parts = [f"t={self.t}", f"seq={self.seq}", f"node={node_label(self.node)}", f"ev={self.ev}"]
        parts.extend(f"{k}={v}" for k, v in self.fields)
        return " ".join(parts)

    def get(self, key: str) -> Optional[str]:
        for k, v in self.fields:
            if k == key:
                return v
        return None


def opt_node(node: Optional[NodeId]) -> str:
    return "none" if node is None else node_label(node)


def msg_kind(msg: ProtocolMessage) -> str:
    return _MSG_KIND[type(msg)]


def msg_fields(msg: ProtocolMessage) -> list[tuple[str, str]]:
    """Serialize a message to trace fields, msg= first, fixed key order."""
    if isinstance(msg, CandidacyReport):
        rest = [("from", node_label(msg.sender)), ("score", repr(msg.score))]
    elif isinstance(msg, DtaAnnouncement):
        rest = [
            ("dta", node_label(msg.dta)),
            ("successor", opt_node(msg.successor)),
            ("group", str(msg.group)),
        ]
    elif isinstance(msg, Query):
        rest = [("item", str(msg.item)), ("from", node_label(msg.sender))]
    elif isinstance(msg, Redirect):
        rest = [("dta", node_label(msg.to_dta))]
    elif isinstance(msg, (ValidData, MulticastUpdate)):
        rest = [
            ("item", str(msg.item)),
            ("version", str(msg.version)),
            ("avi", str(msg.avi)),
            ("ts", str(msg.ts)),
        ]
    elif isinstance(msg, InvalidationReport):
        if msg.entries:
            body = ";".join(f"{e.item}:{e.avi}:{e.ts}" for e in msg.entries)
        else:
            body = "-"
        rest = [("entries", body)]
    elif isinstance(msg, ServerUpdate):
        rest = [("item", str(msg.item)), ("version", str(msg.version)), ("ts", str(msg.ts))]
    elif isinstance(msg, (Register, RoamNotice)):
        rest = [("from", node_label(msg.sender))]
    else:  # pragma: no cover - closed message set
        raise TypeError(f"unknown message type {type(msg)}")
    return [("msg", msg_kind(msg))] + rest


_MSG_KIND = {
    CandidacyReport: "candidacy",
    DtaAnnouncement: "announce",
    Query: "query",
    Redirect: "redirect",
    ValidData: "data",
    MulticastUpdate: "mcast",
    InvalidationReport: "ir",
    ServerUpdate: "supdate",
    Register: "register",
    RoamNotice: "roam-notice",
}


def parse_ir_entries(body: str) -> tuple[IrEntry, ...]:
    if body == "-":
        return ()
    out = []
    for part in body.split(";"):
        item, avi, ts = part.split(":")
        out.append(IrEntry(int(item), int(avi), int(ts)))
    return tuple(out)


class TraceFormatError(ValueError):
    pass


def parse_header(line: str) -> dict[str, str]:
    if not line.startswith(TRACE_HEADER_PREFIX):
        raise TraceFormatError(f"missing trace header, got: {line[:60]!r}")
    out: dict[str, str] = {}
    for part in line[len(TRACE_HEADER_PREFIX):].split():
        key, eq, value = part.partition("=")
        if not eq:
            raise TraceFormatError(f"malformed header field {part!r}")
        out[key] = value
    return out


def parse_line(line: str, lineno: int) -> TraceRecord:
    fields: list[tuple[str, str]] = []
    t = seq = None
    node = None
    ev = None
    for part in line.split(" "):
        key, eq, value = part.partition("=")
        if not eq:
            raise TraceFormatError(f"line {lineno}: malformed field {part!r}")
        if key == "t":
            t = int(value)
        elif key == "seq":
            seq = int(value)
        elif key == "node":
            from .core import parse_node

            node = parse_node(value)
        elif key == "ev":
            ev = value
        else:
            fields.append((key, value))
    if t is None or seq is None or node is None or ev is None:
        raise TraceFormatError(f"line {lineno}: missing one of t/seq/node/ev")
    return TraceRecord(t, seq, node, ev, tuple(fields))


def format_trace(header_fields: dict[str, str], records: Iterable[TraceRecord]) -> str:
    header = TRACE_HEADER_PREFIX + "".join(f" {k}={v}" for k, v in header_fields.items())
    lines = [header]
    lines.extend(r.line() for r in records)
    return "\n".join(lines) + "\n"
