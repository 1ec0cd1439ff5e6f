"""Deterministic discrete-event engine: queue, channels, workload, run loop.

Determinism contract: one seeded generator, a documented draw order (client
factors first, then per-client query streams, per-item update streams,
per-client sleep streams), constant channel latencies, and a global sequence
counter that breaks same-tick ties in enqueue order.  The mapping
(config, seed) -> trace is a pure function.

Message loss exists only through sleep (and roaming departure): a message to
a sleeping or departed client is logged as a drop, never silently lost, and
nothing is ever delivered twice.
"""

from __future__ import annotations

import heapq
import random
from bisect import bisect_right
from dataclasses import dataclass
from itertools import accumulate

from .avi import AviEstimator
from .baseline import ts_bs_step, ts_client_step
from .config import ScenarioConfig
from .core import (
    BASE_STATION,
    Channel,
    DataItem,
    ElectionTimeout,
    IrTick,
    LocalQuery,
    NodeId,
    NodeKind,
    ProtocolMessage,
    Roam,
    SERVER,
    ScheduledUpdate,
    Send,
    SimTime,
    Sleep,
    Wake,
    client_node,
    node_label,
)
from .election import CandidateFactors
from .metrics import Metrics, aggregate_metrics
from .nodes import (
    BaseStationState,
    ClientState,
    ServerState,
    StepOutput,
    bs_step,
    candidacy_send,
    client_step,
    server_step,
)
from .trace import TraceRecord, format_trace, msg_fields


@dataclass(frozen=True)
class Deliver:
    to: NodeId
    channel: Channel
    msg: ProtocolMessage
    src: NodeId
    msg_fields: tuple  # serialized once at send time, shared by every recipient


def gen_workload(
    workload, num_clients: int, num_items: int, horizon: SimTime, rng: random.Random
) -> list[tuple[SimTime, object]]:
    """Generate the full event stream for one run; identical seed, identical stream.

    Draw order: per-client query streams (clients 1..N, items Zipf-skewed),
    per-item update streams, per-client sleep/wake streams.
    """
    events: list[tuple[SimTime, object]] = []

    weights = [(i + 1) ** -workload.zipf_theta for i in range(num_items)]
    cum = list(accumulate(weights))
    total = cum[-1]

    def zipf_pick() -> int:
        idx = bisect_right(cum, rng.random() * total)
        return min(idx, num_items - 1)

    if workload.query_rate > 0:
        lam = workload.query_rate / 1000.0  # per tick
        for c in range(1, num_clients + 1):
            node = client_node(c)
            t = 0.0
            while True:
                t += rng.expovariate(lam)
                if t > horizon:
                    break
                events.append((max(1, int(t)), LocalQuery(node, zipf_pick())))

    if workload.update_mean > 0:
        lam = 1.0 / workload.update_mean
        for item in range(num_items):
            t = 0.0
            last_tick = 0  # update times per item are strictly increasing
            while True:
                t += rng.expovariate(lam)
                if t > horizon:
                    break
                tick = max(last_tick + 1, int(t))
                if tick > horizon:
                    break
                events.append((tick, ScheduledUpdate(item)))
                last_tick = tick

    if workload.sleep_rate > 0 and workload.sleep_mean > 0:
        lam = workload.sleep_rate / 1000.0
        for c in range(1, num_clients + 1):
            node = client_node(c)
            t = 0.0
            while True:
                t += rng.expovariate(lam)
                if t > horizon:
                    break
                start = max(1, int(t))
                duration = max(1, int(rng.expovariate(1.0 / workload.sleep_mean)))
                events.append((start, Sleep(node)))
                events.append((start + duration, Wake(node)))
                t += duration

    events.sort(key=lambda pair: pair[0])  # stable: generation order breaks ties
    return events


@dataclass
class RunResult:
    strategy: str
    seed: int
    config_digest: str
    header: dict[str, str]
    records: list[TraceRecord]
    metrics: Metrics

    def trace_text(self) -> str:
        return format_trace(self.header, self.records)


class Engine:
    def __init__(self, cfg: ScenarioConfig, seed: int):
        self.cfg = cfg
        self.seed = seed
        self.now: SimTime = 0
        self._queue: list[tuple[SimTime, int, object]] = []
        self._eseq = 0
        self.records: list[TraceRecord] = []
        self._rseq = 0
        self.departed: set[int] = set()
        self._latency = {ch: cfg.channel.latency(ch) for ch in Channel}

        rng = random.Random(seed)
        if cfg.scripted_factors is not None:
            factors = list(cfg.scripted_factors)
        else:
            factors = [
                CandidateFactors(
                    energy=rng.uniform(0.05, 1.0),
                    distance=rng.uniform(0.0, cfg.election.max_distance),
                    access_rate=rng.uniform(0.0, cfg.election.max_access),
                )
                for _ in range(cfg.num_clients)
            ]

        w = cfg.baseline.period * cfg.baseline.history
        self.clients: dict[int, ClientState] = {}
        for i in range(1, cfg.num_clients + 1):
            self.clients[i] = ClientState(
                node_id=client_node(i),
                factors=factors[i - 1],
                score_mode=cfg.election.mode,
                max_distance=cfg.election.max_distance,
                max_access=cfg.election.max_access,
                hot_set=cfg.hot_set,
                mcast_slack=cfg.channel.d_mc,
                ts_window=w,
                cache_capacity=cfg.cache_capacity,
            )
        self.bs = BaseStationState(
            population={client_node(i) for i in self.clients},
            estimator=AviEstimator(cfg.avi),
            deadline_ticks=cfg.election.deadline,
            serve_slack=cfg.channel.d_down + cfg.channel.d_mc,
            lease_floor=cfg.channel.d_down + cfg.channel.d_mc + 1,
            emit_irs=(cfg.strategy == "dta-multicast"),
        )
        self.server = ServerState(
            db={i: DataItem(i, 0, 0, 0) for i in range(cfg.num_items)}
        )

        if cfg.scripted_events is not None:
            stream = sorted(cfg.scripted_events, key=lambda pair: pair[0])
        else:
            stream = gen_workload(cfg.workload, cfg.num_clients, cfg.num_items, cfg.horizon, rng)
        for at, event in stream:
            self._push(at, event)

        if cfg.strategy == "dta-multicast":
            # election kickoff: each client reports its candidacy at t=0
            for i in self.clients:
                send = candidacy_send(self.clients[i])
                mf = self._record_send(client_node(i), send, 0)
                self._fan_out(client_node(i), send, 0, mf)
            self.bs.election_round = "full"
            self.bs.election_deadline = cfg.election.deadline
            self._push(cfg.election.deadline, ElectionTimeout())
        else:
            t = cfg.baseline.period
            while t <= cfg.horizon:
                self._push(t, IrTick())
                t += cfg.baseline.period

    # -- queue and trace plumbing --------------------------------------------

    def _push(self, at: SimTime, event: object) -> None:
        heapq.heappush(self._queue, (at, self._eseq, event))
        self._eseq += 1

    def _rec(self, t: SimTime, node: NodeId, ev: str, fields) -> None:
        self.records.append(TraceRecord(t, self._rseq, node, ev, tuple(fields)))
        self._rseq += 1

    def _record_send(self, sender: NodeId, send: Send, now: SimTime) -> tuple:
        to = "*" if send.to is None else node_label(send.to)
        mf = tuple(msg_fields(send.msg))
        self._rec(now, sender, "send", (("ch", send.channel.value), ("to", to)) + mf)
        return mf

    def _fan_out(self, sender: NodeId, send: Send, now: SimTime, mf: tuple) -> None:
        ch = send.channel
        latency = self._latency[ch]
        if ch is Channel.BROADCAST:
            targets = [client_node(i) for i in self.clients if i not in self.departed]
        elif ch is Channel.MULTICAST:
            targets = [
                client_node(i)
                for i in self.clients
                if i not in self.departed and self.clients[i].group_joined
            ]
        else:
            targets = [send.to]
        at = now + latency
        for to in targets:
            self._push(at, Deliver(to, ch, send.msg, sender, mf))

    def _apply_output(self, node: NodeId, out: StepOutput, now: SimTime) -> None:
        for rec in out.records:
            fields = rec.fields
            if rec.ev == "answer":
                item = int(fields[0][1])
                version = int(fields[1][1])
                stale = version < self.server.db[item].version
                fields = fields + [("stale", "1" if stale else "0")]
            self._rec(now, node, rec.ev, fields)
        for send in out.sends:
            mf = self._record_send(node, send, now)
            self._fan_out(node, send, now, mf)
        for at in out.timers:
            self._push(at, ElectionTimeout())

    # -- node dispatch ---------------------------------------------------------

    def _client_dispatch(self, state: ClientState, event, now: SimTime) -> StepOutput:
        if self.cfg.strategy == "ts-broadcast":
            return ts_client_step(state, event, now)
        return client_step(state, event, now)

    def _bs_dispatch(self, event, now: SimTime) -> StepOutput:
        if self.cfg.strategy == "ts-broadcast":
            return ts_bs_step(self.bs, event, now, self.cfg.baseline.period * self.cfg.baseline.history)
        return bs_step(self.bs, event, now)

    # -- main loop --------------------------------------------------------------

    def run(self) -> RunResult:
        cfg = self.cfg
        while self._queue and self._queue[0][0] <= cfg.horizon:
            at, _, event = heapq.heappop(self._queue)
            now = self.now = at

            if isinstance(event, Deliver):
                to = event.to
                base = (("ch", event.channel.value), ("src", node_label(event.src)))
                if to.kind is NodeKind.CLIENT:
                    if to.index in self.departed:
                        self._rec(now, to, "drop", (("reason", "roam"),) + base + event.msg_fields)
                        continue
                    state = self.clients[to.index]
                    if state.asleep:
                        self._rec(now, to, "drop", (("reason", "sleep"),) + base + event.msg_fields)
                        continue
                self._rec(now, to, "recv", base + event.msg_fields)
                if to.kind is NodeKind.CLIENT:
                    out = self._client_dispatch(self.clients[to.index], event.msg, now)
                elif to == BASE_STATION:
                    out = self._bs_dispatch(event.msg, now)
                else:
                    out = server_step(self.server, event.msg, now)
                self._apply_output(to, out, now)

            elif isinstance(event, LocalQuery):
                idx = event.client.index
                if idx in self.departed:
                    self._rec(now, event.client, "skip", [("reason", "roam"), ("item", str(event.item))])
                    continue
                state = self.clients[idx]
                if state.asleep:
                    self._rec(now, event.client, "skip", [("reason", "sleep"), ("item", str(event.item))])
                    continue
                self._rec(now, event.client, "query", [("item", str(event.item))])
                self._apply_output(event.client, self._client_dispatch(state, event, now), now)

            elif isinstance(event, ScheduledUpdate):
                self._apply_output(SERVER, server_step(self.server, event, now), now)

            elif isinstance(event, (Sleep, Wake, Roam)):
                idx = event.client.index
                if idx in self.departed:
                    continue
                name = {Sleep: "sleep", Wake: "wake", Roam: "roam"}[type(event)]
                self._rec(now, event.client, name, [])
                out = self._client_dispatch(self.clients[idx], event, now)
                self._apply_output(event.client, out, now)
                if isinstance(event, Roam):
                    self.departed.add(idx)

            elif isinstance(event, ElectionTimeout):
                self._rec(now, BASE_STATION, "timeout", [])
                self._apply_output(BASE_STATION, self._bs_dispatch(event, now), now)

            elif isinstance(event, IrTick):
                self._apply_output(BASE_STATION, self._bs_dispatch(event, now), now)

            else:  # pragma: no cover - closed event set
                raise TypeError(f"unknown event {event!r}")

        header = {
            "strategy": cfg.strategy,
            "seed": str(self.seed),
            "num_clients": str(cfg.num_clients),
            "num_items": str(cfg.num_items),
            "horizon": str(cfg.horizon),
            "d_up": str(cfg.channel.d_up),
            "d_down": str(cfg.channel.d_down),
            "d_mc": str(cfg.channel.d_mc),
            "d_peer": str(cfg.channel.d_peer),
            "d_wire": str(cfg.channel.d_wire),
            "config": cfg.digest(),
        }
        return RunResult(
            strategy=cfg.strategy,
            seed=self.seed,
            config_digest=cfg.digest(),
            header=header,
            records=self.records,
            metrics=aggregate_metrics(self.records),
        )


def run_scenario(cfg: ScenarioConfig, seed: int) -> RunResult:
    return Engine(cfg, seed).run()
