"""Protocol state machines: base station, client, elected agent, update source.

Each step function maps (state, event, now) to (mutated state, outgoing
sends, trace records, timer requests) and is deterministic: identical inputs
always produce identical outputs, so replaying a trace reproduces it exactly.
States are owned by a single engine instance, never shared.

Safety rule enforced throughout: data is only handed to a query from a cache
window that is still open at the moment the answer lands.  Serving paths that
relay through the agent therefore check validity through the remaining hop
latency, and the base station re-leases a window (extending the entry's
interval from the present) before serving an entry whose window has already
closed - it sees every server update, so an expired window with no newer
version means the data is in fact still current.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

from .avi import AviEstimator, is_valid, should_emit_ir
from .core import (
    BASE_STATION,
    CacheEntry,
    CandidacyReport,
    Channel,
    DataItem,
    DtaAnnouncement,
    ElectionTimeout,
    InvalidationReport,
    IrEntry,
    ItemId,
    LocalQuery,
    LookupStatus,
    MulticastUpdate,
    NodeId,
    ProtocolMessage,
    Query,
    Redirect,
    Register,
    Roam,
    RoamNotice,
    SERVER,
    ScheduledUpdate,
    Send,
    ServerUpdate,
    SimTime,
    Sleep,
    ValidData,
    Wake,
    cache_lookup,
    node_label,
)
from .election import CandidateFactors, candidate_score, select_dta
from .trace import Rec, msg_fields


class Role(Enum):
    ORDINARY = "ordinary"
    DTA = "dta"


@dataclass
class StepOutput:
    sends: list[Send] = field(default_factory=list)
    records: list[Rec] = field(default_factory=list)
    timers: list[SimTime] = field(default_factory=list)  # election timeout requests


def violation(what: str, msg: Optional[ProtocolMessage] = None) -> Rec:
    fields = [("what", what)]
    if msg is not None:
        fields.extend(msg_fields(msg))
    return Rec("violation", fields)


# --- client ------------------------------------------------------------------


@dataclass
class ClientState:
    node_id: NodeId
    factors: CandidateFactors
    score_mode: str
    max_distance: float
    max_access: float
    hot_set: tuple[ItemId, ...] = ()
    mcast_slack: int = 0        # multicast hop latency; agent serves from cache
                                # only if the window outlives this hop
    ts_window: int = 0          # baseline purge threshold (k*L ticks)
    cache_capacity: Optional[int] = None
    cache: "OrderedDict[ItemId, CacheEntry]" = field(default_factory=OrderedDict)
    role: Role = Role.ORDINARY
    known_dta: Optional[NodeId] = None
    registered: bool = False
    group_joined: bool = False
    asleep: bool = False
    sleep_started: Optional[SimTime] = None
    pending: dict[ItemId, list[SimTime]] = field(default_factory=dict)
    requested: set[ItemId] = field(default_factory=set)  # baseline: uplinked, unanswered


def candidacy_send(state: ClientState) -> Send:
    score = candidate_score(
        state.factors, state.score_mode, state.max_distance, state.max_access
    )
    return Send(Channel.UPLINK, BASE_STATION, CandidacyReport(state.node_id, score))


def answer_rec(item: ItemId, entry: CacheEntry, source: str, latency: int) -> Rec:
    return Rec(
        "answer",
        [
            ("item", str(item)),
            ("version", str(entry.item.version)),
            ("source", source),
            ("latency", str(latency)),
            ("ts", str(entry.item.last_update_ts)),
            ("avi", str(entry.item.avi)),
        ],
    )


def _install(state: ClientState, data: DataItem, now: SimTime) -> CacheEntry:
    entry = CacheEntry(data, now)
    state.cache[data.id] = entry
    state.cache.move_to_end(data.id)
    if state.cache_capacity is not None:
        while len(state.cache) > state.cache_capacity:
            state.cache.popitem(last=False)
    return entry


def _query_send(state: ClientState, item: ItemId) -> Send:
    msg = Query(item, state.node_id)
    if state.role is Role.DTA or state.known_dta is None:
        return Send(Channel.UPLINK, BASE_STATION, msg)
    return Send(Channel.PEER, state.known_dta, msg)


def _local_query(state: ClientState, item: ItemId, now: SimTime, out: StepOutput) -> None:
    res = cache_lookup(state.cache, item, now)
    if res.status is LookupStatus.HIT_VALID:
        state.cache.move_to_end(item)
        out.records.append(answer_rec(item, res.entry, "local", 0))
        return
    first = item not in state.pending
    state.pending.setdefault(item, []).append(now)
    if first:
        out.sends.append(_query_send(state, item))


def _answer_pending(
    state: ClientState, item: ItemId, now: SimTime, source: str, out: StepOutput
) -> None:
    """Answer every pending query for `item` from the cached entry.

    The defensive invalid-on-arrival branch keeps the queries pending and
    refetches; the serving guards make it unreachable in normal operation.
    """
    times = state.pending.pop(item, None)
    if times is None:
        return
    entry = state.cache.get(item)
    if entry is None or (times and not is_valid(entry, now)):
        out.records.append(violation("expired-on-arrival"))
        state.pending[item] = times
        out.sends.append(_query_send(state, item))
        return
    for t in times:
        out.records.append(answer_rec(item, entry, source, now - t))


def _apply_ir(state: ClientState, report: InvalidationReport) -> list[ItemId]:
    """Invalidate per report entries; returns affected items still of interest."""
    touched = []
    for e in report.entries:
        ce = state.cache.get(e.item)
        if ce is None:
            continue
        if ce.item.last_update_ts < e.ts:
            del state.cache[e.item]
            touched.append(e.item)
        elif ce.item.last_update_ts == e.ts:
            state.cache[e.item] = CacheEntry(replace(ce.item, avi=e.avi), ce.fetched_at)
            touched.append(e.item)
    return touched


def _bootstrap(state: ClientState, out: StepOutput) -> None:
    """Freshly named agent prefetches its own cache plus the configured hot set."""
    for item in sorted(set(state.cache.keys()) | set(state.hot_set)):
        if item not in state.pending:
            state.pending[item] = []
            out.sends.append(Send(Channel.UPLINK, BASE_STATION, Query(item, state.node_id)))


def dta_bootstrap(state: ClientState, now: SimTime) -> StepOutput:
    out = StepOutput()
    _bootstrap(state, out)
    return out


def _wake(state: ClientState, now: SimTime, out: StepOutput) -> None:
    state.asleep = False
    state.sleep_started = None
    for item in sorted(state.pending.keys()):
        res = cache_lookup(state.cache, item, now)
        if res.status is LookupStatus.HIT_VALID:
            state.cache.move_to_end(item)
            for t in state.pending.pop(item):
                out.records.append(answer_rec(item, res.entry, "local", now - t))
        else:
            out.sends.append(_query_send(state, item))


def dta_step(state: ClientState, event, now: SimTime) -> StepOutput:
    """Agent-specific message handling; `state.role` must be DTA."""
    out = StepOutput()
    kind = type(event)
    if kind is Query:
        res = cache_lookup(state.cache, event.item, now)
        if res.status is LookupStatus.HIT_VALID and is_valid(res.entry, now + state.mcast_slack):
            state.cache.move_to_end(event.item)
            d = res.entry.item
            out.sends.append(
                Send(Channel.MULTICAST, None, MulticastUpdate(d.id, d.version, d.avi, d.last_update_ts))
            )
        elif event.item not in state.pending:
            # one uplink per item regardless of how many members ask
            state.pending[event.item] = []
            out.sends.append(Send(Channel.UPLINK, BASE_STATION, Query(event.item, state.node_id)))
        return out
    if kind is ValidData:
        data = DataItem(event.item, event.version, event.ts, event.avi)
        _install(state, data, now)
        out.sends.append(
            Send(Channel.MULTICAST, None, MulticastUpdate(event.item, event.version, event.avi, event.ts))
        )
        _answer_pending(state, event.item, now, "server", out)
        return out
    if kind is InvalidationReport:
        touched = _apply_ir(state, event)
        for item in sorted(touched):
            ce = state.cache.get(item)
            if ce is not None and is_valid(ce, now):
                continue
            if item not in state.pending:
                state.pending[item] = []
                out.sends.append(Send(Channel.UPLINK, BASE_STATION, Query(item, state.node_id)))
        return out
    if kind is Register:
        return out  # membership is tracked at the joining client
    out.records.append(violation("unexpected-at-dta", event))
    return out


def client_step(state: ClientState, event, now: SimTime) -> StepOutput:
    out = StepOutput()
    kind = type(event)  # dispatch ordered by delivery frequency
    if kind is MulticastUpdate:
        if state.role is Role.DTA:
            out.records.append(violation("unexpected-at-dta", event))
            return out
        _install(state, DataItem(event.item, event.version, event.ts, event.avi), now)
        _answer_pending(state, event.item, now, "dta", out)
        return out
    if kind is InvalidationReport:
        if state.role is Role.DTA:
            return dta_step(state, event, now)
        _apply_ir(state, event)
        return out
    if kind is LocalQuery:
        _local_query(state, event.item, now, out)
        return out
    if kind is ValidData:
        if state.role is Role.DTA:
            return dta_step(state, event, now)
        _install(state, DataItem(event.item, event.version, event.ts, event.avi), now)
        _answer_pending(state, event.item, now, "server", out)
        return out
    if kind is Query:
        if state.role is Role.DTA:
            return dta_step(state, event, now)
        out.records.append(violation("query-at-ordinary-client", event))
        return out
    if kind is Register:
        if state.role is Role.DTA:
            return dta_step(state, event, now)
        out.records.append(violation("unexpected-at-client", event))
        return out
    if kind is DtaAnnouncement:
        state.known_dta = event.dta
        if event.dta == state.node_id:
            if state.role is not Role.DTA:
                state.role = Role.DTA
                state.group_joined = False
                _bootstrap(state, out)
        else:
            state.role = Role.ORDINARY
            out.sends.append(Send(Channel.PEER, event.dta, Register(state.node_id)))
            state.registered = True
            state.group_joined = True
            if event.successor is None:
                # the station lacks a successor; refresh our candidacy
                out.sends.append(candidacy_send(state))
        return out
    if kind is Redirect:
        state.known_dta = event.to_dta
        for item in sorted(state.pending.keys()):
            out.sends.append(Send(Channel.PEER, event.to_dta, Query(item, state.node_id)))
        return out
    if kind is Sleep:
        state.asleep = True
        state.sleep_started = now
        return out
    if kind is Wake:
        _wake(state, now, out)
        return out
    if kind is Roam:
        out.sends.append(Send(Channel.UPLINK, BASE_STATION, RoamNotice(state.node_id)))
        return out
    out.records.append(violation("unexpected-at-client", event))
    return out


# --- base station ------------------------------------------------------------


@dataclass
class BaseStationState:
    population: set[NodeId]
    estimator: AviEstimator
    deadline_ticks: int
    serve_slack: int            # worst remaining path: downlink + multicast hop
    lease_floor: int            # minimum re-leased window, > serve_slack
    emit_irs: bool = True       # False under the broadcast baseline
    db_cache: dict[ItemId, DataItem] = field(default_factory=dict)
    candidacy: dict[NodeId, float] = field(default_factory=dict)
    registered: set[NodeId] = field(default_factory=set)
    current_dta: Optional[NodeId] = None
    successor_dta: Optional[NodeId] = None
    election_deadline: Optional[SimTime] = None
    election_round: Optional[str] = None  # "full" | "successor"
    pending_fetch: dict[ItemId, list[NodeId]] = field(default_factory=dict)
    wired_inflight: set[ItemId] = field(default_factory=set)


def elect_rec(dta: NodeId, successor: Optional[NodeId]) -> Rec:
    return Rec(
        "elect",
        [("dta", node_label(dta)), ("successor", "none" if successor is None else node_label(successor))],
    )


def _open_round(state: BaseStationState, kind: str, now: SimTime, out: StepOutput) -> None:
    state.election_round = kind
    state.election_deadline = now + state.deadline_ticks
    state.candidacy.clear()
    out.timers.append(state.election_deadline)


def _finish_full(state: BaseStationState, now: SimTime, out: StepOutput) -> None:
    dta, successor = select_dta(state.candidacy)
    state.current_dta = dta
    state.successor_dta = successor
    state.candidacy.clear()
    state.election_deadline = None
    state.election_round = None
    out.records.append(elect_rec(dta, successor))
    out.sends.append(Send(Channel.BROADCAST, None, DtaAnnouncement(dta, successor)))
    if successor is None and state.population - {dta}:
        _open_round(state, "successor", now, out)


def _finish_successor(state: BaseStationState, out: StepOutput) -> None:
    candidates = {n: s for n, s in state.candidacy.items() if n != state.current_dta}
    if candidates:
        state.successor_dta = select_dta(candidates)[0]
    state.candidacy.clear()
    state.election_deadline = None
    state.election_round = None
    if state.current_dta is not None:
        out.records.append(elect_rec(state.current_dta, state.successor_dta))


def _serve_or_fetch(
    state: BaseStationState, requester: NodeId, item: ItemId, now: SimTime, out: StepOutput
) -> None:
    entry = state.db_cache.get(item)
    if entry is None:
        waiters = state.pending_fetch.setdefault(item, [])
        if requester not in waiters:
            waiters.append(requester)
        if item not in state.wired_inflight:
            state.wired_inflight.add(item)
            out.sends.append(Send(Channel.WIRED, SERVER, Query(item, BASE_STATION)))
        return
    if state.emit_irs and entry.last_update_ts + entry.avi <= now + state.serve_slack:
        # window closed (or closing within the remaining hops) with no newer
        # version pushed: the copy is still current, so re-lease it from now
        new_avi = (now + max(state.estimator.estimate(item), state.lease_floor)) - entry.last_update_ts
        out.records.append(
            Rec(
                "lease",
                [
                    ("item", str(item)),
                    ("old", str(entry.avi)),
                    ("new", str(new_avi)),
                    ("end", str(entry.last_update_ts + new_avi)),
                ],
            )
        )
        entry = replace(entry, avi=new_avi)
        state.db_cache[item] = entry
    out.sends.append(
        Send(
            Channel.DOWNLINK,
            requester,
            ValidData(item, entry.version, entry.avi, entry.last_update_ts),
        )
    )


def _handle_server_update(
    state: BaseStationState, msg: ServerUpdate, now: SimTime, out: StepOutput
) -> None:
    prev = state.db_cache.get(msg.item)
    if prev is None or msg.version > prev.version:
        old_avi = None if prev is None else prev.avi
        new_avi = state.estimator.observe(msg.item, msg.ts)
        state.db_cache[msg.item] = DataItem(msg.item, msg.version, msg.ts, new_avi)
        out.records.append(
            Rec(
                "avi",
                [
                    ("item", str(msg.item)),
                    ("old", "none" if old_avi is None else str(old_avi)),
                    ("new", str(new_avi)),
                    ("ts", str(msg.ts)),
                ],
            )
        )
        if state.emit_irs and old_avi is not None and should_emit_ir(old_avi, new_avi):
            report = InvalidationReport((IrEntry(msg.item, new_avi, msg.ts),))
            out.sends.append(Send(Channel.BROADCAST, None, report))
    state.wired_inflight.discard(msg.item)
    waiters = state.pending_fetch.pop(msg.item, [])
    for requester in dict.fromkeys(waiters):
        _serve_or_fetch(state, requester, msg.item, now, out)


def _handle_roam(state: BaseStationState, sender: NodeId, now: SimTime, out: StepOutput) -> None:
    state.population.discard(sender)
    state.candidacy.pop(sender, None)
    state.registered.discard(sender)
    for waiters in state.pending_fetch.values():
        if sender in waiters:
            waiters.remove(sender)
    if sender == state.current_dta:
        state.current_dta = state.successor_dta
        state.successor_dta = None
        if state.current_dta is not None:
            out.records.append(elect_rec(state.current_dta, None))
            out.sends.append(Send(Channel.BROADCAST, None, DtaAnnouncement(state.current_dta, None)))
            if state.population - {state.current_dta}:
                _open_round(state, "successor", now, out)
        elif state.population:
            _open_round(state, "full", now, out)
    elif sender == state.successor_dta:
        state.successor_dta = None
        if state.current_dta is not None and state.population - {state.current_dta}:
            out.sends.append(Send(Channel.BROADCAST, None, DtaAnnouncement(state.current_dta, None)))
            _open_round(state, "successor", now, out)


def bs_step(state: BaseStationState, event, now: SimTime) -> StepOutput:
    out = StepOutput()
    kind = type(event)
    if kind is ServerUpdate:
        _handle_server_update(state, event, now, out)
        return out
    if kind is Query:
        if state.current_dta is None or event.sender == state.current_dta:
            _serve_or_fetch(state, event.sender, event.item, now, out)
        else:
            out.sends.append(Send(Channel.DOWNLINK, event.sender, Redirect(state.current_dta)))
        return out
    if kind is CandidacyReport:
        if event.sender not in state.population:
            return out
        state.candidacy[event.sender] = event.score
        state.registered.add(event.sender)
        if state.election_round == "full" and state.population <= state.candidacy.keys():
            _finish_full(state, now, out)
        elif state.election_round == "successor" and (
            state.population - {state.current_dta} <= state.candidacy.keys()
        ):
            _finish_successor(state, out)
        return out
    if kind is ElectionTimeout:
        if state.election_deadline is None or now < state.election_deadline:
            return out  # stale timer from an already-closed round
        if state.election_round == "full":
            if state.candidacy:
                _finish_full(state, now, out)
            else:
                state.election_deadline = now + state.deadline_ticks
                out.timers.append(state.election_deadline)
        elif state.election_round == "successor":
            _finish_successor(state, out)
        return out
    if kind is RoamNotice:
        _handle_roam(state, event.sender, now, out)
        return out
    out.records.append(violation("unexpected-at-bs", event))
    return out


# --- server ------------------------------------------------------------------


@dataclass
class ServerState:
    db: dict[ItemId, DataItem] = field(default_factory=dict)


def server_step(state: ServerState, event, now: SimTime) -> StepOutput:
    out = StepOutput()
    if isinstance(event, ScheduledUpdate):
        prev = state.db[event.item]
        data = DataItem(event.item, prev.version + 1, now, 0)
        state.db[event.item] = data
        out.records.append(
            Rec("update", [("item", str(event.item)), ("version", str(data.version))])
        )
        out.sends.append(
            Send(Channel.WIRED, BASE_STATION, ServerUpdate(event.item, data.version, now))
        )
        return out
    if isinstance(event, Query):
        d = state.db[event.item]
        out.sends.append(
            Send(Channel.WIRED, BASE_STATION, ServerUpdate(d.id, d.version, d.last_update_ts))
        )
        return out
    out.records.append(violation("unexpected-at-server", event))
    return out
