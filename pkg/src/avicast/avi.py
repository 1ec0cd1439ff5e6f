"""Validity-interval policy: checks, interval estimation, report rule, error windows.

A cached copy is valid while its last-update timestamp plus its estimated
validity interval exceeds the current time; on the equality boundary it is
treated as invalid, the conservative choice that never serves data past its
window.  Estimates come from an exponentially weighted moving average of
observed update intervals (a `static` mode with a fixed interval is available
for controlled experiments).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .core import CacheEntry, ItemId, SimTime


class UpdateOrderingError(ValueError):
    """An update was observed at a time not after the previous one."""


@dataclass(frozen=True)
class AviParams:
    mode: str = "ewma"  # "ewma" | "static"
    alpha: float = 0.5
    default_avi: int = 1000
    min_avi: int = 1
    static_avi: int = 1000


def is_valid(entry: CacheEntry, now: SimTime) -> bool:
    return entry.item.last_update_ts + entry.item.avi > now


def should_emit_ir(old_avi: int, new_avi: int) -> bool:
    """Reports go out only when the interval shrank, never when it grew."""
    return new_avi < old_avi


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


@dataclass
class AviEstimator:
    """Per-item interval estimator; O(1) state per item.

    First observation of an item yields the configured default; the second
    seeds the smoothed interval directly; later ones apply the EWMA
    recurrence.  Estimates are rounded half-up to integer ticks and floored
    at `min_avi` so a zero estimate can never make fresh data instantly stale.
    """

    params: AviParams
    last_ts: dict[ItemId, SimTime] = field(default_factory=dict)
    smoothed: dict[ItemId, float] = field(default_factory=dict)

    def observe(self, item: ItemId, t: SimTime) -> int:
        last = self.last_ts.get(item)
        if last is not None and t <= last:
            raise UpdateOrderingError(
                f"update for item {item} at t={t} not after previous t={last}"
            )
        self.last_ts[item] = t
        if self.params.mode == "static":
            return self.params.static_avi
        if last is None:
            return self.params.default_avi
        interval = t - last
        prev = self.smoothed.get(item)
        if prev is None:
            s = float(interval)
        else:
            s = self.params.alpha * interval + (1.0 - self.params.alpha) * prev
        self.smoothed[item] = s
        return max(self.params.min_avi, round_half_up(s))

    def estimate(self, item: ItemId) -> int:
        """Current estimate without recording an observation."""
        if self.params.mode == "static":
            return self.params.static_avi
        s = self.smoothed.get(item)
        if s is None:
            return self.params.default_avi
        return max(self.params.min_avi, round_half_up(s))


def fvp_fip(
    times: Sequence[SimTime], avis: Sequence[int], horizon: SimTime
) -> tuple[int, int]:
    """Total ticks where the interval over- (FVP) and under-estimates (FIP) validity.

    For update k the true validity window runs to the next update (to the
    horizon for the last update, whose interval window is clipped there since
    nothing is known beyond it).
    """
    if len(times) != len(avis):
        raise ValueError(
            f"avi list length {len(avis)} does not match update count {len(times)}"
        )
    if not times:
        return (0, 0)
    for a, b in zip(times, times[1:]):
        if b <= a:
            raise ValueError(f"update times must be strictly increasing, got {a} then {b}")
    if horizon < times[-1]:
        raise ValueError(f"horizon {horizon} precedes last update {times[-1]}")
    fvp = 0
    fip = 0
    last = len(times) - 1
    for k, (t, a) in enumerate(zip(times, avis)):
        if k < last:
            true_end = times[k + 1]
            avi_end = t + a
        else:
            true_end = horizon
            avi_end = min(t + a, horizon)
        fvp += max(0, avi_end - true_end)
        fip += max(0, true_end - avi_end)
    return (fvp, fip)
