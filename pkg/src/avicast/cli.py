"""Command-line entry point: run scenarios, compare strategies, replay traces.

Exit codes: 0 success, 1 configuration error (message names the offending
key), 2 runtime invariant violation (message cites the invariant and the
trace line).  Output files are written atomically (temp file + rename) so an
interrupted run never leaves a truncated CSV or trace behind.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import tempfile
from pathlib import Path

from .config import STRATEGIES, ConfigError, load_config
from .metrics import ComparisonError, compare, metrics_csv
from .replay import TraceCheckError, check_trace, load_trace
from .simnet import run_scenario
from .trace import TraceFormatError


def atomic_write(path: str, text: str) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=target.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def parse_seed_range(spec: str) -> list[int]:
    if ".." in spec:
        lo_s, _, hi_s = spec.partition("..")
        try:
            lo, hi = int(lo_s), int(hi_s)
        except ValueError:
            raise ConfigError(f"--seeds must look like A..B, got {spec!r}")
        if hi < lo:
            raise ConfigError(f"--seeds range is empty: {spec}")
        return list(range(lo, hi + 1))
    try:
        return [int(spec)]
    except ValueError:
        raise ConfigError(f"--seeds must be an integer or A..B, got {spec!r}")


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.strategy:
        cfg = dataclasses.replace(cfg, strategy=args.strategy)
    result = run_scenario(cfg, args.seed)
    if args.out_metrics:
        atomic_write(args.out_metrics, metrics_csv([(args.seed, cfg.strategy, result.metrics)]))
    if args.out_trace:
        atomic_write(args.out_trace, result.trace_text())
    m = result.metrics
    print(
        f"run ok: strategy={cfg.strategy} seed={args.seed} "
        f"queries={m.queries_issued} answered={m.answered_total} "
        f"server_uplinks={m.server_uplinks} ir_count={m.ir_count}"
    )
    return 0


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    seeds = parse_seed_range(args.seeds)
    results = []
    rows = []
    for strategy in STRATEGIES:
        run_cfg = dataclasses.replace(cfg, strategy=strategy)
        for seed in seeds:
            result = run_scenario(run_cfg, seed)
            results.append(result)
            rows.append((seed, strategy, result.metrics))
    table = compare(results)
    atomic_write(args.out, table)
    if args.out_metrics:
        atomic_write(args.out_metrics, metrics_csv(rows))
    sys.stdout.write(table)
    return 0


def cmd_replay(args) -> int:
    try:
        text = Path(args.trace).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read trace {args.trace}: {exc}")
    trace = load_trace(text)
    seen = check_trace(trace)
    checked = ", ".join(f"{k}={v}" for k, v in sorted(seen.items()))
    print(f"replay ok: {len(trace.records)} records, checks passed ({checked})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="avicast")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario with one seed")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, required=True)
    p_run.add_argument("--strategy", choices=STRATEGIES)
    p_run.add_argument("--out-metrics")
    p_run.add_argument("--out-trace")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="run both strategies over a seed range")
    p_cmp.add_argument("--config", required=True)
    p_cmp.add_argument("--seeds", required=True, help="A..B inclusive, or a single seed")
    p_cmp.add_argument("--out", required=True)
    p_cmp.add_argument("--out-metrics")
    p_cmp.set_defaults(func=cmd_compare)

    p_rep = sub.add_parser("replay", help="re-check every invariant against a saved trace")
    p_rep.add_argument("--trace", required=True)
    p_rep.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ComparisonError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (TraceCheckError, TraceFormatError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
