import dataclasses
from pathlib import Path

import pytest

from avicast.avi import AviParams
from avicast.config import (
    BaselineParams,
    ChannelParams,
    ElectionParams,
    ScenarioConfig,
    WorkloadParams,
    load_config,
)

REPO_ROOT = Path(__file__).resolve().parents[1]
SCENARIO_DIR = REPO_ROOT / "scenarios"
GOLDEN_DIR = Path(__file__).resolve().parent / "golden"


def small_config(**overrides) -> ScenarioConfig:
    """A tiny scripted-friendly scenario for unit tests."""
    base = ScenarioConfig(
        num_clients=3,
        num_items=4,
        horizon=2000,
        strategy="dta-multicast",
        channel=ChannelParams(),
        workload=WorkloadParams(query_rate=0.0, update_mean=0.0),
        avi=AviParams(),
        election=ElectionParams(mode="literal", deadline=100),
        baseline=BaselineParams(period=200, history=10),
    )
    return dataclasses.replace(base, **overrides)


@pytest.fixture(scope="session")
def default_cfg() -> ScenarioConfig:
    return load_config(str(SCENARIO_DIR / "default.toml"))


@pytest.fixture(scope="session")
def golden_cfg() -> ScenarioConfig:
    return load_config(str(SCENARIO_DIR / "paper_fig5_14.toml"))


def scripted_factors_highest_last(n: int) -> tuple:
    """Literal-mode factors: client n scores highest, client n-1 second."""
    from avicast.election import CandidateFactors

    return tuple(CandidateFactors(0.1 * i, 0.1 * i, 0.1 * i) for i in range(1, n + 1))


def burst_config(n_members: int = 4) -> ScenarioConfig:
    """n_members clients query the same cold item within one round-trip;
    one extra client serves as the elected agent."""
    from avicast.core import LocalQuery, client_node

    n = n_members + 1
    events = tuple(
        (500 + i, LocalQuery(client_node(i + 1), 0)) for i in range(n_members)
    )
    return small_config(
        num_clients=n,
        num_items=1,
        horizon=1200,
        scripted_factors=scripted_factors_highest_last(n),
        scripted_events=events,
    )


def sleeper_config() -> ScenarioConfig:
    """Client 1 sleeps through an invalidation report and the refresh
    multicast; after waking, its stale query must be served by the agent's
    still-valid copy without touching the server."""
    from avicast.core import LocalQuery, ScheduledUpdate, Sleep, Wake, client_node

    events = (
        (550, Sleep(client_node(1))),
        (600, ScheduledUpdate(0)),
        (900, Wake(client_node(1))),
        (1050, LocalQuery(client_node(1), 0)),
    )
    return small_config(
        num_clients=3,
        num_items=1,
        horizon=1500,
        hot_set=(0,),
        scripted_factors=scripted_factors_highest_last(3),
        scripted_events=events,
    )
