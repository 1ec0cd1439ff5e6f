"""Scenario configuration: TOML files, exhaustive validation, path resolution.

Every key is explicit and validated with a message naming the offending key;
unknown keys are errors, not warnings, so a typo can never silently change a
run.  The per-run seed comes from the command line, not the file.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .avi import AviParams
from .core import (
    Channel,
    ItemId,
    LocalQuery,
    Roam,
    ScheduledUpdate,
    SimTime,
    Sleep,
    Wake,
    client_node,
)
from .election import CandidateFactors

SCENARIO_DIR_ENV = "AVICAST_SCENARIOS"

STRATEGIES = ("dta-multicast", "ts-broadcast")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelParams:
    d_up: int = 5     # client -> base station
    d_down: int = 5   # base station -> client (unicast and broadcast)
    d_mc: int = 2     # agent multicast hop
    d_peer: int = 2   # client -> agent unicast
    d_wire: int = 1   # base station <-> server

    def latency(self, channel: Channel) -> int:
        return {
            Channel.UPLINK: self.d_up,
            Channel.DOWNLINK: self.d_down,
            Channel.BROADCAST: self.d_down,
            Channel.MULTICAST: self.d_mc,
            Channel.PEER: self.d_peer,
            Channel.WIRED: self.d_wire,
        }[channel]


@dataclass(frozen=True)
class WorkloadParams:
    query_rate: float = 0.5     # queries/s per client; 0 disables
    update_mean: float = 5000.0  # mean ticks between updates per item; 0 disables
    zipf_theta: float = 0.8
    sleep_rate: float = 0.0     # sleeps/s per client; 0 disables
    sleep_mean: float = 1000.0  # mean sleep duration in ticks


@dataclass(frozen=True)
class ElectionParams:
    mode: str = "normalized"  # "normalized" | "literal"
    max_distance: float = 1000.0
    max_access: float = 10.0
    deadline: int = 100


@dataclass(frozen=True)
class BaselineParams:
    period: int = 200   # ticks between broadcast reports
    history: int = 10   # report window = history * period


ScriptedEvent = tuple[SimTime, object]


@dataclass(frozen=True)
class ScenarioConfig:
    num_clients: int = 10
    num_items: int = 50
    horizon: SimTime = 100_000
    strategy: str = "dta-multicast"
    channel: ChannelParams = ChannelParams()
    workload: WorkloadParams = WorkloadParams()
    avi: AviParams = AviParams()
    election: ElectionParams = ElectionParams()
    baseline: BaselineParams = BaselineParams()
    cache_capacity: Optional[int] = None  # None = unlimited, else LRU bound
    hot_set: tuple[ItemId, ...] = ()
    scripted_factors: Optional[tuple[CandidateFactors, ...]] = None
    scripted_events: Optional[tuple[ScriptedEvent, ...]] = None

    def digest(self) -> str:
        """Config fingerprint, strategy excluded so paired runs match."""
        canon = repr(replace(self, strategy=""))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def _require_table(data: dict, name: str) -> dict:
    sub = data.get(name, {})
    if not isinstance(sub, dict):
        raise ConfigError(f"{name} must be a table")
    return sub


def _check_keys(table: dict, allowed: set[str], where: str) -> None:
    for key in table:
        if key not in allowed:
            raise ConfigError(f"unknown key: {where}.{key}")


def _num(table: dict, where: str, key: str, default, kind, lo=None, hi=None):
    value = table.get(key, default)
    if kind is int and isinstance(value, bool):
        raise ConfigError(f"{where}.{key} must be an integer, got {value!r}")
    if kind is int and not isinstance(value, int):
        raise ConfigError(f"{where}.{key} must be an integer, got {value!r}")
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{where}.{key} must be a number, got {value!r}")
        value = float(value)
    if lo is not None and value < lo:
        raise ConfigError(f"{where}.{key} must be >= {lo}, got {value}")
    if hi is not None and value > hi:
        raise ConfigError(f"{where}.{key} must be <= {hi}, got {value}")
    return value


def _choice(table: dict, where: str, key: str, default: str, options) -> str:
    value = table.get(key, default)
    if value not in options:
        raise ConfigError(f"{where}.{key} must be one of {sorted(options)}, got {value!r}")
    return value


def parse_config(data: dict, source: str = "<config>") -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a table")
    _check_keys(
        data,
        {
            "scenario",
            "channel",
            "workload",
            "avi",
            "election",
            "baseline",
            "cache",
            "dta",
            "scripted_factors",
            "scripted_events",
        },
        "config",
    )

    sc = _require_table(data, "scenario")
    _check_keys(sc, {"num_clients", "num_items", "horizon", "strategy"}, "scenario")
    num_clients = _num(sc, "scenario", "num_clients", 10, int, lo=1)
    num_items = _num(sc, "scenario", "num_items", 50, int, lo=1)
    horizon = _num(sc, "scenario", "horizon", 100_000, int, lo=1)
    strategy = _choice(sc, "scenario", "strategy", "dta-multicast", STRATEGIES)

    ch = _require_table(data, "channel")
    _check_keys(ch, {"d_up", "d_down", "d_mc", "d_peer", "d_wire"}, "channel")
    channel = ChannelParams(
        d_up=_num(ch, "channel", "d_up", 5, int, lo=1),
        d_down=_num(ch, "channel", "d_down", 5, int, lo=1),
        d_mc=_num(ch, "channel", "d_mc", 2, int, lo=1),
        d_peer=_num(ch, "channel", "d_peer", 2, int, lo=1),
        d_wire=_num(ch, "channel", "d_wire", 1, int, lo=1),
    )

    wl = _require_table(data, "workload")
    _check_keys(
        wl, {"query_rate", "update_mean", "zipf_theta", "sleep_rate", "sleep_mean"}, "workload"
    )
    workload = WorkloadParams(
        query_rate=_num(wl, "workload", "query_rate", 0.5, float, lo=0),
        update_mean=_num(wl, "workload", "update_mean", 5000.0, float, lo=0),
        zipf_theta=_num(wl, "workload", "zipf_theta", 0.8, float, lo=0),
        sleep_rate=_num(wl, "workload", "sleep_rate", 0.0, float, lo=0),
        sleep_mean=_num(wl, "workload", "sleep_mean", 1000.0, float, lo=0),
    )

    av = _require_table(data, "avi")
    _check_keys(av, {"mode", "alpha", "default_avi", "min_avi", "static_avi"}, "avi")
    alpha = _num(av, "avi", "alpha", 0.5, float)
    if not (0.0 < alpha <= 1.0):
        raise ConfigError(f"avi.alpha must be in (0, 1], got {alpha}")
    avi = AviParams(
        mode=_choice(av, "avi", "mode", "ewma", ("ewma", "static")),
        alpha=alpha,
        default_avi=_num(av, "avi", "default_avi", 1000, int, lo=1),
        min_avi=_num(av, "avi", "min_avi", 1, int, lo=1),
        static_avi=_num(av, "avi", "static_avi", 1000, int, lo=1),
    )

    el = _require_table(data, "election")
    _check_keys(el, {"mode", "max_distance", "max_access", "deadline"}, "election")
    election = ElectionParams(
        mode=_choice(el, "election", "mode", "normalized", ("normalized", "literal")),
        max_distance=_num(el, "election", "max_distance", 1000.0, float),
        max_access=_num(el, "election", "max_access", 10.0, float),
        deadline=_num(el, "election", "deadline", 100, int, lo=1),
    )
    if election.mode == "normalized":
        if election.max_distance <= 0:
            raise ConfigError("election.max_distance must be > 0 in normalized mode")
        if election.max_access <= 0:
            raise ConfigError("election.max_access must be > 0 in normalized mode")

    bl = _require_table(data, "baseline")
    _check_keys(bl, {"period", "history"}, "baseline")
    baseline = BaselineParams(
        period=_num(bl, "baseline", "period", 200, int, lo=1),
        history=_num(bl, "baseline", "history", 10, int, lo=1),
    )

    ca = _require_table(data, "cache")
    _check_keys(ca, {"capacity"}, "cache")
    raw_cap = ca.get("capacity", "unlimited")
    if raw_cap == "unlimited":
        cache_capacity = None
    elif isinstance(raw_cap, int) and not isinstance(raw_cap, bool) and raw_cap >= 1:
        cache_capacity = raw_cap
    else:
        raise ConfigError(
            f'cache.capacity must be "unlimited" or an integer >= 1, got {raw_cap!r}'
        )

    dta = _require_table(data, "dta")
    _check_keys(dta, {"hot_set"}, "dta")
    raw_hot = dta.get("hot_set", [])
    if not isinstance(raw_hot, list) or not all(
        isinstance(i, int) and not isinstance(i, bool) for i in raw_hot
    ):
        raise ConfigError("dta.hot_set must be a list of item ids")
    for i in raw_hot:
        if not (0 <= i < num_items):
            raise ConfigError(f"dta.hot_set contains item {i} outside [0, {num_items})")
    hot_set = tuple(raw_hot)

    scripted_factors = None
    if "scripted_factors" in data:
        rows = data["scripted_factors"]
        if not isinstance(rows, list):
            raise ConfigError("scripted_factors must be an array of tables")
        if len(rows) != num_clients:
            raise ConfigError(
                f"scripted_factors must have one entry per client "
                f"({num_clients}), got {len(rows)}"
            )
        parsed = []
        for idx, row in enumerate(rows, start=1):
            where = f"scripted_factors[{idx}]"
            _check_keys(row, {"energy", "distance", "access_rate"}, where)
            energy = _num(row, where, "energy", None, float, lo=0.0, hi=1.0)
            distance = _num(row, where, "distance", None, float, lo=0.0)
            access = _num(row, where, "access_rate", None, float, lo=0.0)
            parsed.append(CandidateFactors(energy, distance, access))
        scripted_factors = tuple(parsed)

    scripted_events = None
    if "scripted_events" in data:
        rows = data["scripted_events"]
        if not isinstance(rows, list):
            raise ConfigError("scripted_events must be an array of tables")
        parsed_events: list[ScriptedEvent] = []
        for idx, row in enumerate(rows, start=1):
            where = f"scripted_events[{idx}]"
            _check_keys(row, {"at", "kind", "client", "item"}, where)
            at = _num(row, where, "at", None, int, lo=0)
            kind = _choice(row, where, "kind", None, ("query", "update", "sleep", "wake", "roam"))
            if kind in ("query", "sleep", "wake", "roam"):
                cidx = _num(row, where, "client", None, int, lo=1, hi=num_clients)
                node = client_node(cidx)
            if kind in ("query", "update"):
                item = _num(row, where, "item", None, int, lo=0, hi=num_items - 1)
            if kind == "query":
                parsed_events.append((at, LocalQuery(node, item)))
            elif kind == "update":
                parsed_events.append((at, ScheduledUpdate(item)))
            elif kind == "sleep":
                parsed_events.append((at, Sleep(node)))
            elif kind == "wake":
                parsed_events.append((at, Wake(node)))
            else:
                parsed_events.append((at, Roam(node)))
        update_times: dict[int, int] = {}
        for at, event in sorted(parsed_events, key=lambda pair: pair[0]):
            if isinstance(event, ScheduledUpdate):
                prev = update_times.get(event.item)
                if prev is not None and at <= prev:
                    raise ConfigError(
                        f"scripted_events: updates for item {event.item} must use "
                        f"strictly increasing times (got {prev} then {at})"
                    )
                update_times[event.item] = at
        scripted_events = tuple(parsed_events)

    return ScenarioConfig(
        num_clients=num_clients,
        num_items=num_items,
        horizon=horizon,
        strategy=strategy,
        channel=channel,
        workload=workload,
        avi=avi,
        election=election,
        baseline=baseline,
        cache_capacity=cache_capacity,
        hot_set=hot_set,
        scripted_factors=scripted_factors,
        scripted_events=scripted_events,
    )


def resolve_scenario(path: str) -> Path:
    """Resolve a --config argument: literal path, then +.toml, then the
    scenario directory from $AVICAST_SCENARIOS with the same two forms."""
    candidates = [Path(path), Path(str(path) + ".toml")]
    env_dir = os.environ.get(SCENARIO_DIR_ENV)
    if env_dir:
        candidates.append(Path(env_dir) / path)
        candidates.append(Path(env_dir) / (str(path) + ".toml"))
    for cand in candidates:
        if cand.is_file():
            return cand
    raise ConfigError(f"scenario file not found: {path}")


def load_config(path: str) -> ScenarioConfig:
    resolved = resolve_scenario(path)
    try:
        with open(resolved, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{resolved}: {exc}") from exc
    return parse_config(data, source=str(resolved))
