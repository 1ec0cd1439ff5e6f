"""Cross-checks tying the staleness metric to the error-window model."""

import dataclasses
import warnings

from conftest import scripted_factors_highest_last, small_config

from avicast.avi import AviParams, fvp_fip
from avicast.core import LocalQuery, ScheduledUpdate, client_node
from avicast.simnet import run_scenario


def walk_answers_with_server_versions(records):
    """Yield (answer_record, server_version, next_update_t) in trace order."""
    version = {}
    update_time = {}
    for r in records:
        if r.ev == "update":
            item = int(r.get("item"))
            version[item] = int(r.get("version"))
            update_time[(item, version[item])] = r.t
        elif r.ev == "answer":
            item = int(r.get("item"))
            v = int(r.get("version"))
            yield r, version.get(item, 0), update_time.get((item, v + 1))


def test_stale_flag_matches_update_history_and_fvp_windows(default_cfg):
    """A stale answer happens exactly when a newer version exists, and always
    inside the served entry's over-estimation window."""
    checked_stale = 0
    for seed in (1, 2, 3):
        rr = run_scenario(default_cfg, seed)
        for r, server_v, next_t in walk_answers_with_server_versions(rr.records):
            answered_v = int(r.get("version"))
            is_stale = r.get("stale") == "1"
            assert is_stale == (answered_v < server_v), r.line()
            if is_stale:
                checked_stale += 1
                ts, avi = int(r.get("ts")), int(r.get("avi"))
                assert next_t is not None and next_t <= r.t < ts + avi, r.line()
                # the served window over-estimates validity: fvp strictly positive
                fvp, _ = fvp_fip([ts, next_t], [avi, 1], next_t)
                assert fvp >= ts + avi - next_t > 0
    assert checked_stale > 0  # seeds chosen so the check actually bites


def periodic_static_config():
    """Updates on a 500-tick grid, fixed 50-tick interval, queries far from
    update instants: over-estimation windows never reach an update."""
    updates = tuple((500 * k, ScheduledUpdate(0)) for k in range(1, 9))
    queries = tuple(
        (500 * k + off, LocalQuery(client_node(c), 0))
        for k in range(1, 9)
        for c, off in ((1, 25), (2, 100))
    )
    events = tuple(sorted(updates + queries, key=lambda pair: pair[0]))
    return small_config(
        num_clients=3,
        num_items=1,
        horizon=5000,
        avi=AviParams(mode="static", static_avi=50),
        scripted_factors=scripted_factors_highest_last(3),
        scripted_events=events,
    )


def test_static_mode_below_true_interval_never_serves_stale():
    rr = run_scenario(periodic_static_config(), 1)
    m = rr.metrics
    assert m.queries_issued == 16
    assert m.answered_total == 16
    assert m.stale_answers == 0


def test_mean_latency_advantage_is_flagged_not_enforced(default_cfg):
    """Lower mean latency under the multicast strategy is expected but not a
    hard guarantee; violating seeds are reported, not failed."""
    flagged = []
    for seed in (1, 2, 3, 4, 5):
        a = run_scenario(default_cfg, seed).metrics
        b = run_scenario(dataclasses.replace(default_cfg, strategy="ts-broadcast"), seed).metrics
        mean_a = sum(a.latencies) / len(a.latencies)
        mean_b = sum(b.latencies) / len(b.latencies)
        if mean_a > mean_b:
            flagged.append((seed, mean_a, mean_b))
    for seed, ma, mb in flagged:
        warnings.warn(f"seed {seed}: multicast mean latency {ma:.1f} > baseline {mb:.1f}")
    print(f"latency flag check: {len(flagged)} of 5 seeds flagged")
