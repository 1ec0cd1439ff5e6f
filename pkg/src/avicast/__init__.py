"""avicast: deterministic simulator for interval-based cache consistency with
elected-agent multicast dissemination in a single-cell wireless network."""

from .avi import AviEstimator, AviParams, fvp_fip, is_valid, should_emit_ir
from .config import ConfigError, ScenarioConfig, load_config, parse_config
from .core import cache_lookup
from .election import CandidateFactors, candidate_score, select_dta
from .metrics import Metrics, aggregate_metrics, compare, metrics_csv
from .simnet import RunResult, gen_workload, run_scenario

__all__ = [
    "AviEstimator",
    "AviParams",
    "CandidateFactors",
    "ConfigError",
    "Metrics",
    "RunResult",
    "ScenarioConfig",
    "aggregate_metrics",
    "cache_lookup",
    "candidate_score",
    "compare",
    "fvp_fip",
    "gen_workload",
    "is_valid",
    "load_config",
    "metrics_csv",
    "parse_config",
    "run_scenario",
    "select_dta",
    "should_emit_ir",
]
