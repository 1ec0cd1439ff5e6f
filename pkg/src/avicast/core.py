"""Shared domain types: simulated time, data items, node identities, wire messages.

Time is integer ticks (1 tick = 1 ms of simulated time); there is no
floating-point time anywhere, so event ordering is exact and platform
independent.  Data payloads are stood in for by a monotone version counter,
which makes staleness machine-checkable: an answer is stale exactly when its
version is below the server's version at answer time.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional, Union

SimTime = int
ItemId = int


class NodeKind(Enum):
    SERVER = "server"
    BASE_STATION = "bs"
    CLIENT = "client"


@dataclass(frozen=True)
class NodeId:
    kind: NodeKind
    index: int

    def __str__(self) -> str:
        return node_label(self)


@lru_cache(maxsize=None)
def node_label(node: NodeId) -> str:
    return f"{node.kind.value}:{node.index}"


def parse_node(label: str) -> NodeId:
    kind, _, index = label.partition(":")
    return NodeId(NodeKind(kind), int(index))


SERVER = NodeId(NodeKind.SERVER, 0)
BASE_STATION = NodeId(NodeKind.BASE_STATION, 0)


def client_node(index: int) -> NodeId:
    return NodeId(NodeKind.CLIENT, index)


@dataclass(frozen=True)
class DataItem:
    """A versioned datum as known at one place in the system."""

    id: ItemId
    version: int
    last_update_ts: SimTime
    avi: int  # estimated validity interval, in ticks


@dataclass(frozen=True)
class CacheEntry:
    item: DataItem
    fetched_at: SimTime


# --- wire messages -----------------------------------------------------------
#
# A closed set.  Every message carries enough fields to be replayed from the
# trace alone, which is why e.g. Query names its sender explicitly.


@dataclass(frozen=True)
class CandidacyReport:
    sender: NodeId
    score: float


@dataclass(frozen=True)
class DtaAnnouncement:
    dta: NodeId
    successor: Optional[NodeId]
    group: int = 0


@dataclass(frozen=True)
class Query:
    item: ItemId
    sender: NodeId


@dataclass(frozen=True)
class Redirect:
    to_dta: NodeId


@dataclass(frozen=True)
class ValidData:
    item: ItemId
    version: int
    avi: int
    ts: SimTime


@dataclass(frozen=True)
class MulticastUpdate:
    item: ItemId
    version: int
    avi: int
    ts: SimTime


@dataclass(frozen=True)
class IrEntry:
    item: ItemId
    avi: int
    ts: SimTime


@dataclass(frozen=True)
class InvalidationReport:
    entries: tuple[IrEntry, ...]


@dataclass(frozen=True)
class ServerUpdate:
    item: ItemId
    version: int
    ts: SimTime


@dataclass(frozen=True)
class Register:
    sender: NodeId


@dataclass(frozen=True)
class RoamNotice:
    sender: NodeId


ProtocolMessage = Union[
    CandidacyReport,
    DtaAnnouncement,
    Query,
    Redirect,
    ValidData,
    MulticastUpdate,
    InvalidationReport,
    ServerUpdate,
    Register,
    RoamNotice,
]


# --- channels ----------------------------------------------------------------


class Channel(Enum):
    UPLINK = "up"         # client -> base station
    DOWNLINK = "down"     # base station -> one client
    BROADCAST = "bc"      # base station -> every client in the cell
    MULTICAST = "mc"      # agent -> joined group members
    PEER = "peer"         # client -> agent, unicast
    WIRED = "wire"        # base station <-> server


@dataclass(frozen=True)
class Send:
    """An outgoing message; `to` is None for broadcast/multicast fan-out."""

    channel: Channel
    to: Optional[NodeId]
    msg: ProtocolMessage


# --- node-local events -------------------------------------------------------
#
# Events the engine delivers to nodes besides message deliveries.  Shared here
# so the node step functions do not depend on the engine module.


@dataclass(frozen=True)
class LocalQuery:
    client: NodeId
    item: ItemId


@dataclass(frozen=True)
class ScheduledUpdate:
    item: ItemId


@dataclass(frozen=True)
class Sleep:
    client: NodeId


@dataclass(frozen=True)
class Wake:
    client: NodeId


@dataclass(frozen=True)
class Roam:
    client: NodeId


@dataclass(frozen=True)
class ElectionTimeout:
    pass


@dataclass(frozen=True)
class IrTick:
    pass


# --- cache lookup ------------------------------------------------------------


class LookupStatus(Enum):
    HIT_VALID = "hit-valid"
    HIT_STALE = "hit-stale"
    MISS = "miss"


@dataclass(frozen=True)
class LookupResult:
    status: LookupStatus
    entry: Optional[CacheEntry]


def cache_lookup(cache, item: ItemId, now: SimTime) -> LookupResult:
    """Classify a cache probe as exactly one of hit-valid, hit-stale, miss.

    Total and pure: never mutates the cache.
    """
    from .avi import is_valid  # local import: avi depends on core's types

    entry = cache.get(item)
    if entry is None:
        return LookupResult(LookupStatus.MISS, None)
    if is_valid(entry, now):
        return LookupResult(LookupStatus.HIT_VALID, entry)
    return LookupResult(LookupStatus.HIT_STALE, entry)
