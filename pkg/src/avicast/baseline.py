"""Periodic-broadcast timestamp baseline used as the comparison strategy.

Every L ticks the base station broadcasts a report listing (item, timestamp)
for items updated within the window w = k*L.  Clients hold every query until
the next report confirms their cache, answer locally if the entry survived,
and otherwise uplink to the base station - one uplink per querying client,
with no agent and no multicast.  A client that slept longer than w purges its
entire cache on waking.
"""

from __future__ import annotations

from .core import (
    BASE_STATION,
    Channel,
    DataItem,
    InvalidationReport,
    IrEntry,
    IrTick,
    LocalQuery,
    Query,
    Roam,
    RoamNotice,
    Send,
    SimTime,
    Sleep,
    ValidData,
    Wake,
)
from .nodes import (
    BaseStationState,
    ClientState,
    StepOutput,
    _install,
    answer_rec,
    bs_step,
    violation,
)
from .trace import Rec


def ts_bs_step(
    state: BaseStationState, event, now: SimTime, ir_window: int = 0
) -> StepOutput:
    """Base-station step under the baseline; adds the periodic report tick."""
    if isinstance(event, IrTick):
        out = StepOutput()
        entries = tuple(
            IrEntry(item, d.avi, d.last_update_ts)
            for item, d in sorted(state.db_cache.items())
            if now - d.last_update_ts < ir_window
        )
        out.records.append(Rec("ir-tick", [("window", str(ir_window))]))
        out.sends.append(Send(Channel.BROADCAST, None, InvalidationReport(entries)))
        return out
    return bs_step(state, event, now)


def ts_client_step(state: ClientState, event, now: SimTime) -> StepOutput:
    out = StepOutput()
    if isinstance(event, LocalQuery):
        # every query waits for the next report, cache hit or not
        state.pending.setdefault(event.item, []).append(now)
        return out
    if isinstance(event, Sleep):
        state.asleep = True
        state.sleep_started = now
        return out
    if isinstance(event, Wake):
        state.asleep = False
        if state.sleep_started is not None and now - state.sleep_started > state.ts_window:
            count = len(state.cache)
            state.cache.clear()
            out.records.append(Rec("purge", [("items", str(count))]))
        # a reply may have been lost to sleep; let the next report re-request
        state.requested.clear()
        state.sleep_started = None
        return out
    if isinstance(event, Roam):
        out.sends.append(Send(Channel.UPLINK, BASE_STATION, RoamNotice(state.node_id)))
        return out

    msg = event
    if isinstance(msg, InvalidationReport):
        for e in msg.entries:
            ce = state.cache.get(e.item)
            if ce is not None and ce.item.last_update_ts < e.ts:
                del state.cache[e.item]
        for item in sorted(state.pending.keys()):
            if item in state.cache:
                entry = state.cache[item]
                state.cache.move_to_end(item)
                for t in state.pending.pop(item):
                    out.records.append(answer_rec(item, entry, "local", now - t))
            elif item not in state.requested:
                state.requested.add(item)
                out.sends.append(Send(Channel.UPLINK, BASE_STATION, Query(item, state.node_id)))
        return out
    if isinstance(msg, ValidData):
        entry = _install(state, DataItem(msg.item, msg.version, msg.ts, msg.avi), now)
        state.requested.discard(msg.item)
        for t in state.pending.pop(msg.item, []):
            out.records.append(answer_rec(msg.item, entry, "server", now - t))
        return out
    out.records.append(violation("unexpected-at-ts-client", msg))
    return out
