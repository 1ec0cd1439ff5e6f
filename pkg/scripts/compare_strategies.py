#!/usr/bin/env python3
"""Run both dissemination strategies over a seed range and print the
comparison table, plus a short per-seed uplink summary.

Examples:
    python scripts/compare_strategies.py
    python scripts/compare_strategies.py --config scenarios/default.toml --seeds 1..50
    python scripts/compare_strategies.py --out cmp.csv --out-metrics runs.csv
"""

import argparse
import dataclasses
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from avicast.cli import atomic_write, parse_seed_range
from avicast.config import STRATEGIES, load_config
from avicast.metrics import compare, metrics_csv
from avicast.simnet import run_scenario


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default="scenarios/default.toml")
    parser.add_argument("--seeds", default="1..20")
    parser.add_argument("--out", help="write the comparison table here")
    parser.add_argument("--out-metrics", help="write one CSV row per run here")
    args = parser.parse_args()

    cfg = load_config(args.config)
    seeds = parse_seed_range(args.seeds)
    results = []
    t0 = time.time()
    for strategy in STRATEGIES:
        run_cfg = dataclasses.replace(cfg, strategy=strategy)
        for seed in seeds:
            results.append(run_scenario(run_cfg, seed))
    elapsed = time.time() - t0

    table = compare(results)
    sys.stdout.write(table)
    print(f"# {len(results)} runs in {elapsed:.1f}s")
    by = {(r.strategy, r.seed): r.metrics for r in results}
    for seed in seeds:
        a = by[("dta-multicast", seed)]
        b = by[("ts-broadcast", seed)]
        marker = "" if a.server_uplinks < b.server_uplinks else "  <-- baseline won"
        print(f"# seed {seed}: server_uplinks {a.server_uplinks} vs {b.server_uplinks}{marker}")

    if args.out:
        atomic_write(args.out, table)
    if args.out_metrics:
        rows = [(r.seed, r.strategy, r.metrics) for r in results]
        atomic_write(args.out_metrics, metrics_csv(rows))
    return 0


if __name__ == "__main__":
    sys.exit(main())
