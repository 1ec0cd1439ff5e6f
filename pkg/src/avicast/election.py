"""Scoring and selection of the transmitting agent and its successor."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional

from .core import NodeId


class ElectionError(ValueError):
    pass


@dataclass(frozen=True)
class CandidateFactors:
    energy: float       # battery fraction in [0, 1]
    distance: float     # meters from the base station, >= 0
    access_rate: float  # queries/s served recently, >= 0


def candidate_score(
    factors: CandidateFactors,
    mode: str = "normalized",
    max_distance: float = 1000.0,
    max_access: float = 10.0,
) -> float:
    """Score a candidate from its three factors.

    `literal` is the plain three-way average of the raw values.  `normalized`
    (the default) maps each factor into [0, 1] first and turns distance into
    proximity, so being far from the base station is never rewarded.
    """
    vals = (factors.energy, factors.distance, factors.access_rate)
    if not all(math.isfinite(v) for v in vals):
        raise ValueError(f"candidate factors must be finite, got {factors}")
    if mode == "literal":
        return (factors.energy + factors.distance + factors.access_rate) / 3.0
    if mode == "normalized":
        if max_distance <= 0 or max_access <= 0:
            raise ValueError("normalized scoring requires positive bounds")
        proximity = 1.0 - min(1.0, factors.distance / max_distance)
        access = min(1.0, factors.access_rate / max_access)
        return (factors.energy + proximity + access) / 3.0
    raise ValueError(f"unknown scoring mode {mode!r}")


def select_dta(scores: Mapping[NodeId, float]) -> tuple[NodeId, Optional[NodeId]]:
    """Pick the agent (highest score) and its successor (second highest).

    Ties break toward the lowest node index; the result is independent of the
    mapping's iteration order.
    """
    if not scores:
        raise ElectionError("no candidacy reports to elect from")
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0].index))
    dta = ranked[0][0]
    successor = ranked[1][0] if len(ranked) > 1 else None
    return (dta, successor)
