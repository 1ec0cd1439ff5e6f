import dataclasses

from conftest import small_config

from avicast.baseline import ts_bs_step, ts_client_step
from avicast.config import BaselineParams, WorkloadParams
from avicast.core import (
    DataItem,
    InvalidationReport,
    IrEntry,
    IrTick,
    LocalQuery,
    Query,
    Sleep,
    ValidData,
    Wake,
    client_node,
)
from avicast.simnet import run_scenario
from test_nodes import cached, make_bs, make_client

C1 = client_node(1)


def ts_client(**kw):
    return make_client(ts_window=2000, **kw)


class TestTsClientSteps:
    def test_query_is_held_until_next_report(self):
        st = ts_client()
        cached(st, 0, 1, 100, 1)  # cached and would even be AVI-stale: irrelevant here
        out = ts_client_step(st, LocalQuery(C1, 0), 250)
        assert out.sends == [] and out.records == []
        assert st.pending == {0: [250]}

    def test_report_answers_surviving_entries_locally(self):
        st = ts_client()
        cached(st, 0, 1, 100, 1)
        ts_client_step(st, LocalQuery(C1, 0), 250)
        out = ts_client_step(st, InvalidationReport(()), 405)
        answers = [r for r in out.records if r.ev == "answer"]
        assert len(answers) == 1
        assert dict(answers[0].fields)["latency"] == "155"
        assert dict(answers[0].fields)["source"] == "local"

    def test_report_invalidates_then_uplinks_once_per_item(self):
        st = ts_client()
        cached(st, 0, 1, 100, 1)
        ts_client_step(st, LocalQuery(C1, 0), 250)
        ts_client_step(st, LocalQuery(C1, 0), 260)
        out = ts_client_step(st, InvalidationReport((IrEntry(0, 5, 300),)), 405)
        assert 0 not in st.cache
        queries = [s for s in out.sends if isinstance(s.msg, Query)]
        assert len(queries) == 1
        # the fetch stays outstanding over later reports
        out = ts_client_step(st, InvalidationReport(()), 605)
        assert out.sends == []

    def test_valid_data_answers_pending(self):
        st = ts_client()
        st.pending[0] = [250]
        st.requested.add(0)
        out = ts_client_step(st, ValidData(0, 2, 50, 300), 420)
        answers = [r for r in out.records if r.ev == "answer"]
        assert dict(answers[0].fields) == {
            "item": "0",
            "version": "2",
            "source": "server",
            "latency": "170",
            "ts": "300",
            "avi": "50",
        }
        assert st.requested == set()

    def test_long_sleep_purges_cache_on_wake(self):
        st = ts_client()
        cached(st, 0, 1, 100, 1)
        ts_client_step(st, Sleep(C1), 500)
        out = ts_client_step(st, Wake(C1), 500 + 11 * 200)  # > window of 10*200
        assert st.cache == {}
        assert [r.ev for r in out.records] == ["purge"]

    def test_short_sleep_keeps_cache(self):
        st = ts_client()
        cached(st, 0, 1, 100, 1)
        ts_client_step(st, Sleep(C1), 500)
        out = ts_client_step(st, Wake(C1), 500 + 1999)
        assert 0 in st.cache
        assert out.records == []


class TestTsBaseStation:
    def test_tick_reports_items_updated_within_window(self):
        bs = make_bs(emit_irs=False)
        bs.db_cache[0] = DataItem(0, 3, 900, 40)
        bs.db_cache[1] = DataItem(1, 2, 100, 40)
        out = ts_bs_step(bs, IrTick(), 1000, ir_window=500)
        reports = [s for s in out.sends if isinstance(s.msg, InvalidationReport)]
        assert len(reports) == 1
        assert reports[0].msg.entries == (IrEntry(0, 40, 900),)

    def test_empty_report_still_broadcast(self):
        bs = make_bs(emit_irs=False)
        out = ts_bs_step(bs, IrTick(), 1000, ir_window=500)
        reports = [s for s in out.sends if isinstance(s.msg, InvalidationReport)]
        assert reports[0].msg.entries == ()


def ts_run(cfg, seed=1):
    return run_scenario(dataclasses.replace(cfg, strategy="ts-broadcast"), seed)


class TestTsEndToEnd:
    def test_two_clients_same_stale_item_cost_two_uplinks(self):
        cfg = small_config(
            num_clients=2,
            num_items=1,
            horizon=1200,
            scripted_events=(
                (250, LocalQuery(client_node(1), 0)),
                (260, LocalQuery(client_node(2), 0)),
            ),
        )
        rr = ts_run(cfg)
        assert rr.metrics.server_uplinks == 2
        assert rr.metrics.answered_total == 2

    def test_answer_latency_at_least_wait_for_next_report(self):
        cfg = small_config(
            num_clients=1,
            num_items=1,
            horizon=1200,
            scripted_events=((250, LocalQuery(client_node(1), 0)),),
        )
        rr = ts_run(cfg)
        # next report broadcast at t=400, so the wait alone is 150 ticks
        assert rr.metrics.latencies[0] >= 150

    def test_reports_fire_every_period(self):
        cfg = small_config(num_clients=1, num_items=1, horizon=1000, scripted_events=())
        rr = ts_run(cfg)
        ticks = [r for r in rr.records if r.ev == "ir-tick"]
        assert [r.t for r in ticks] == [200, 400, 600, 800, 1000]
        assert rr.metrics.ir_count == 5

    def test_purge_trace_visible_after_long_sleep(self):
        cfg = small_config(
            num_clients=1,
            num_items=1,
            horizon=6000,
            baseline=BaselineParams(period=200, history=10),
            scripted_events=(
                (250, LocalQuery(client_node(1), 0)),
                (500, Sleep(client_node(1))),
                (500 + 2201, Wake(client_node(1))),
            ),
        )
        rr = ts_run(cfg)
        purges = [r for r in rr.records if r.ev == "purge"]
        assert len(purges) == 1
        assert dict(purges[0].fields)["items"] == "1"

    def test_reply_lost_to_sleep_is_refetched_after_wake(self):
        # query -> report -> uplink; the data reply arrives during sleep and
        # is dropped; the next report after waking must retry the fetch
        cfg = small_config(
            num_clients=1,
            num_items=1,
            horizon=2000,
            scripted_events=(
                (250, LocalQuery(client_node(1), 0)),
                (407, Sleep(client_node(1))),   # uplink goes out at ~405
                (500, Wake(client_node(1))),
            ),
        )
        rr = ts_run(cfg)
        drops = [r for r in rr.records if r.ev == "drop" and r.get("msg") == "data"]
        assert len(drops) == 1
        assert rr.metrics.answered_total == 1
        assert rr.metrics.server_uplinks == 2  # original fetch plus the retry

    def test_ts_ignores_avi_expiry_for_answering(self):
        # entry far past its interval window still answers after report confirms
        cfg = small_config(
            num_clients=1,
            num_items=1,
            horizon=9000,
            workload=WorkloadParams(query_rate=0.0, update_mean=0.0),
            scripted_events=(
                (250, LocalQuery(client_node(1), 0)),   # fetch, installs default interval
                (8000, LocalQuery(client_node(1), 0)),  # way past any window; no update happened
            ),
        )
        rr = ts_run(cfg)
        answers = [r for r in rr.records if r.ev == "answer"]
        assert len(answers) == 2
        assert dict(answers[1].fields)["source"] == "local"
        assert rr.metrics.server_uplinks == 1
