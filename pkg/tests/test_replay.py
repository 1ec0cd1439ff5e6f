import dataclasses

import pytest

from conftest import small_config, sleeper_config

from avicast.config import WorkloadParams
from avicast.replay import TraceCheckError, check_trace, load_trace
from avicast.simnet import run_scenario
from avicast.trace import TraceFormatError


def random_cfg(**kw):
    return small_config(
        num_clients=4,
        num_items=6,
        horizon=8000,
        scripted_events=None,
        workload=WorkloadParams(query_rate=1.0, update_mean=900.0, sleep_rate=0.05, sleep_mean=600.0),
        **kw,
    )


def run_text(cfg, seed=1):
    return run_scenario(cfg, seed).trace_text()


class TestRoundTrip:
    def test_replay_accepts_every_emitted_trace(self):
        for seed in (1, 2, 3):
            check_trace(load_trace(run_text(random_cfg(), seed)))

    def test_every_line_matches_documented_format(self):
        import re

        pattern = re.compile(
            r"^t=\d+ seq=\d+ node=(server|bs|client):\d+ ev=[a-z-]+( [a-z_]+=\S+)*$"
        )
        lines = run_text(random_cfg()).splitlines()
        assert lines[0].startswith("# avicast-trace v1 ")
        for line in lines[1:]:
            assert pattern.match(line), line

    def test_replay_accepts_frozen_golden_file(self):
        from conftest import GOLDEN_DIR

        check_trace(load_trace((GOLDEN_DIR / "paper_fig5_14.trace").read_text()))

    def test_replay_accepts_baseline_traces(self):
        cfg = dataclasses.replace(random_cfg(), strategy="ts-broadcast")
        for seed in (1, 2):
            check_trace(load_trace(run_text(cfg, seed)))

    def test_replay_accepts_scripted_scenarios(self):
        check_trace(load_trace(run_text(sleeper_config())))

    def test_check_counts_reported(self):
        seen = check_trace(load_trace(run_text(random_cfg())))
        assert seen["conservation"] > 0
        assert seen["avi-safety"] > 0


def set_field(line: str, key: str, value: str) -> str:
    parts = line.split(" ")
    for i, part in enumerate(parts):
        if part.startswith(key + "="):
            parts[i] = f"{key}={value}"
            return " ".join(parts)
    raise AssertionError(f"field {key} not in line: {line}")


class TestTampering:
    def tamper(self, text, fn):
        lines = text.splitlines()
        fn(lines)
        return "\n".join(lines) + "\n"

    def test_header_required(self):
        with pytest.raises(TraceFormatError):
            load_trace("t=0 seq=0 node=bs:0 ev=timeout\n")

    def test_avi_safety_violation_detected(self):
        text = run_text(sleeper_config())

        def hack(lines):
            for i, line in enumerate(lines):
                if " ev=answer " in line:
                    lines[i] = set_field(line, "avi", "0")
                    return
            raise AssertionError("no answer line")

        with pytest.raises(TraceCheckError) as exc:
            check_trace(load_trace(self.tamper(text, hack)))
        assert exc.value.check == "avi-safety"

    def test_lost_message_detected(self):
        text = run_text(random_cfg())

        def drop_last_recv(lines):
            for i in range(len(lines) - 1, -1, -1):
                if " ev=recv " in lines[i]:
                    del lines[i]
                    return
            raise AssertionError("no recv line")

        with pytest.raises(TraceCheckError) as exc:
            check_trace(load_trace(self.tamper(text, drop_last_recv)))
        assert exc.value.check == "conservation"

    def test_unsent_delivery_detected(self):
        text = run_text(random_cfg())

        def duplicate_recv(lines):
            last_t = int(lines[-1].split(" ", 1)[0].split("=")[1])
            last_seq = int(lines[-1].split(" ")[1].split("=")[1])
            for line in lines:
                if " ev=recv " in line:
                    parts = line.split(" ")
                    parts[0] = f"t={last_t}"
                    parts[1] = f"seq={last_seq + 1}"
                    lines.append(" ".join(parts))
                    return
            raise AssertionError("no recv line")

        with pytest.raises(TraceCheckError) as exc:
            check_trace(load_trace(self.tamper(text, duplicate_recv)))
        assert exc.value.check == "conservation"

    def test_time_reordering_detected(self):
        text = run_text(random_cfg())

        def rewind_last(lines):
            lines[-1] = set_field(lines[-1], "t", "0")

        with pytest.raises(TraceCheckError) as exc:
            check_trace(load_trace(self.tamper(text, rewind_last)))
        assert exc.value.check == "time-order"

    def test_latency_mismatch_detected(self):
        text = run_text(sleeper_config())

        def hack(lines):
            for i, line in enumerate(lines):
                if " ev=answer " in line:
                    lines[i] = set_field(line, "latency", "999")
                    return
            raise AssertionError("no answer line")

        with pytest.raises(TraceCheckError) as exc:
            check_trace(load_trace(self.tamper(text, hack)))
        assert exc.value.check == "latency-match"

    def test_error_cites_line_number(self):
        text = run_text(random_cfg())
        with pytest.raises(TraceCheckError) as exc:
            check_trace(
                load_trace(self.tamper(text, lambda ls: (ls.append(ls[-1]),)))
            )
        assert exc.value.lineno > 1
        assert "line" in str(exc.value)
