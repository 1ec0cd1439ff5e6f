"""Metrics aggregation, the CSV format, and strategy comparison.

`server_uplinks` counts query messages crossing the wireless uplink to the
base station (the scarce resource both strategies compete on); `dta_uplinks`
counts member queries reaching the elected agent over the peer channel.
Report bytes use a fixed accounting rule (4 header + 12 per entry) so sizes
are comparable across strategies; the rule is documented, not claimed
realistic.  Latency runs from the local query event to the answer record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .core import NodeKind
from .trace import TraceRecord

IR_HEADER_BYTES = 4
IR_ENTRY_BYTES = 12

CSV_VERSION_LINE = "# avicast-metrics v1"
CSV_COLUMNS = (
    "seed",
    "strategy",
    "server_uplinks",
    "dta_uplinks",
    "ir_count",
    "ir_bytes",
    "queries_issued",
    "answered_local",
    "answered_dta",
    "answered_server",
    "stale_answers",
    "hit_ratio",
    "latency_p50",
    "latency_p90",
    "latency_p99",
    "latency_max",
)


def _nearest_rank(sorted_values: Sequence[int], q: float) -> int:
    if not sorted_values:
        return 0
    rank = max(1, math.ceil(q / 100.0 * len(sorted_values)))
    return sorted_values[rank - 1]


@dataclass
class Metrics:
    server_uplinks: int = 0
    dta_uplinks: int = 0
    ir_count: int = 0
    ir_bytes: int = 0
    queries_issued: int = 0
    answered_local: int = 0
    answered_dta: int = 0
    answered_server: int = 0
    stale_answers: int = 0
    latencies: list[int] = field(default_factory=list)  # kept sorted

    @property
    def answered_total(self) -> int:
        return self.answered_local + self.answered_dta + self.answered_server

    @property
    def hit_ratio(self) -> float:
        if self.queries_issued == 0:
            return 0.0
        return self.answered_local / self.queries_issued

    def latency_percentile(self, q: float) -> int:
        return _nearest_rank(self.latencies, q)

    @property
    def latency_max(self) -> int:
        return self.latencies[-1] if self.latencies else 0

    def column_values(self) -> dict[str, float]:
        return {
            "server_uplinks": self.server_uplinks,
            "dta_uplinks": self.dta_uplinks,
            "ir_count": self.ir_count,
            "ir_bytes": self.ir_bytes,
            "queries_issued": self.queries_issued,
            "answered_local": self.answered_local,
            "answered_dta": self.answered_dta,
            "answered_server": self.answered_server,
            "stale_answers": self.stale_answers,
            "hit_ratio": self.hit_ratio,
            "latency_p50": self.latency_percentile(50),
            "latency_p90": self.latency_percentile(90),
            "latency_p99": self.latency_percentile(99),
            "latency_max": self.latency_max,
        }

    def csv_row(self, seed: int, strategy: str) -> str:
        vals = self.column_values()
        cells = [str(seed), strategy]
        for col in CSV_COLUMNS[2:]:
            v = vals[col]
            cells.append(f"{v:.6f}" if col == "hit_ratio" else str(v))
        return ",".join(cells)


def aggregate_metrics(records: Iterable[TraceRecord]) -> Metrics:
    """Single pass over trace records; also used by replay for parity."""
    m = Metrics()
    for r in records:
        ev = r.ev
        if ev == "query":
            m.queries_issued += 1
        elif ev == "answer":
            source = r.get("source")
            if source == "local":
                m.answered_local += 1
            elif source == "dta":
                m.answered_dta += 1
            else:
                m.answered_server += 1
            m.latencies.append(int(r.get("latency")))
            if r.get("stale") == "1":
                m.stale_answers += 1
        elif ev == "recv":
            if r.get("msg") == "query":
                ch = r.get("ch")
                if ch == "up" and r.node.kind is NodeKind.BASE_STATION:
                    m.server_uplinks += 1
                elif ch == "peer" and r.node.kind is NodeKind.CLIENT:
                    m.dta_uplinks += 1
        elif ev == "send":
            if r.get("msg") == "ir" and r.node.kind is NodeKind.BASE_STATION:
                m.ir_count += 1
                body = r.get("entries")
                n = 0 if body == "-" else body.count(";") + 1
                m.ir_bytes += IR_HEADER_BYTES + IR_ENTRY_BYTES * n
    m.latencies.sort()
    return m


def metrics_csv(rows: Sequence[tuple[int, str, Metrics]]) -> str:
    lines = [CSV_VERSION_LINE, ",".join(CSV_COLUMNS)]
    lines.extend(m.csv_row(seed, strategy) for seed, strategy, m in rows)
    return "\n".join(lines) + "\n"


# --- comparison ---------------------------------------------------------------


class ComparisonError(ValueError):
    pass


COMPARE_VERSION_LINE = "# avicast-compare v1"


def compare(runs: Sequence) -> str:
    """Side-by-side per-metric means with ratios over paired seed runs.

    `runs` items need .strategy, .seed, .config_digest and .metrics.  All runs
    must share a config digest (strategy excluded).  With two strategies
    present, runs are paired by seed and any seed where the multicast strategy
    produced more server uplinks than the broadcast baseline is flagged.
    """
    if not runs:
        raise ComparisonError("nothing to compare")
    digests = {r.config_digest for r in runs}
    if len(digests) != 1:
        raise ComparisonError(f"mismatched configs across runs: {sorted(digests)}")
    groups: dict[str, list] = {}
    for r in runs:
        groups.setdefault(r.strategy, []).append(r)
    if len(groups) == 1:
        name = next(iter(groups))
        ordered = [(name, groups[name]), (name, groups[name])]
    elif len(groups) == 2:
        names = sorted(groups, key=lambda s: 0 if s == "dta-multicast" else 1)
        a, b = names
        if {r.seed for r in groups[a]} != {r.seed for r in groups[b]}:
            raise ComparisonError("strategies were not run over the same seeds")
        ordered = [(a, groups[a]), (b, groups[b])]
    else:
        raise ComparisonError(f"expected at most two strategies, got {sorted(groups)}")

    def mean(vals: list[float]) -> float:
        return sum(vals) / len(vals)

    lines = [COMPARE_VERSION_LINE, f"metric,{ordered[0][0]},{ordered[1][0]},ratio"]
    cols = [c for c in CSV_COLUMNS if c not in ("seed", "strategy")]
    for col in cols:
        a_mean = mean([r.metrics.column_values()[col] for r in ordered[0][1]])
        b_mean = mean([r.metrics.column_values()[col] for r in ordered[1][1]])
        if b_mean == 0:
            ratio = "1.000000" if a_mean == 0 else "inf"
        else:
            ratio = f"{a_mean / b_mean:.6f}"
        lines.append(f"{col},{a_mean:.6f},{b_mean:.6f},{ratio}")

    flagged: list[int] = []
    if ordered[0][0] == "dta-multicast" and ordered[1][0] == "ts-broadcast":
        by_seed_b = {r.seed: r for r in ordered[1][1]}
        for r in sorted(ordered[0][1], key=lambda r: r.seed):
            if r.metrics.server_uplinks > by_seed_b[r.seed].metrics.server_uplinks:
                flagged.append(r.seed)
    tail = ",".join(str(s) for s in flagged) if flagged else "none"
    lines.append(f"# flagged seeds (dta-multicast server_uplinks > ts-broadcast): {tail}")
    return "\n".join(lines) + "\n"
