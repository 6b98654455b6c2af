"""Age-of-Information sample paths.

Time is carried as integer microseconds (``Timestamp``); ages and averages
are reported in seconds. The integral of the sawtooth is accumulated exactly
as twice the area in microseconds squared, so averages carry no quadrature
error and no float drift over long runs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

US_PER_S = 1_000_000
DEFAULT_SKEW_BOUND_US = 10_000

Timestamp = int


class MonotonicityError(ValueError):
    """A tracker was queried or advanced at a time before its last update."""


class CausalityError(ValueError):
    """A delivered update claims a generation time beyond the skew bound."""


def to_us(seconds: float) -> Timestamp:
    return int(round(seconds * US_PER_S))


def to_s(us: int | float) -> float:
    return us / US_PER_S


@dataclass
class AgeTracker:
    """Age of one (source, information type) as seen by the destination.

    The tracker starts with a virtual fresh delivery at ``start`` so the age
    is zero there. ``observe_delivery`` advances the integral to ``now`` and
    lowers the age only when the update is fresher than anything seen so far.
    """

    start: Timestamp = 0
    skew_bound_us: int = DEFAULT_SKEW_BOUND_US
    last_fresh_timestamp: Timestamp = field(init=False)
    last_update_time: Timestamp = field(init=False)
    area2: int = field(init=False, default=0)  # 2 * integral, in us^2
    delivery_count: int = field(init=False, default=0)
    stale_count: int = field(init=False, default=0)
    skew_violations: int = field(init=False, default=0)

    def __post_init__(self) -> None:
        self.last_fresh_timestamp = self.start
        self.last_update_time = self.start

    @property
    def accumulated_integral(self) -> float:
        """Integral of the age since ``start`` in seconds squared."""
        return self.area2 / (2 * US_PER_S * US_PER_S)

    def age_at_us(self, now: Timestamp) -> int:
        if now < self.last_update_time:
            raise MonotonicityError(
                f"query at {now} us precedes last update at {self.last_update_time} us"
            )
        return now - self.last_fresh_timestamp

    def age_at(self, now: Timestamp) -> float:
        return self.age_at_us(now) / US_PER_S

    def advance(self, now: Timestamp) -> None:
        """Integrate the current sawtooth segment up to ``now``."""
        if now < self.last_update_time:
            raise MonotonicityError(
                f"advance to {now} us precedes last update at {self.last_update_time} us"
            )
        a0 = self.last_update_time - self.last_fresh_timestamp
        a1 = now - self.last_fresh_timestamp
        self.area2 += (a0 + a1) * (now - self.last_update_time)
        self.last_update_time = now

    def observe_delivery(self, gen_timestamp: Timestamp, now: Timestamp) -> bool:
        """Record reception at ``now`` of an update generated at ``gen_timestamp``.

        Returns True when the delivery was fresh (the age dropped). Generation
        times slightly ahead of ``now`` (residual clock skew) are clamped to
        ``now`` and counted; beyond ``skew_bound_us`` they raise.
        """
        if gen_timestamp > now:
            if gen_timestamp - now > self.skew_bound_us:
                raise CausalityError(
                    f"generation time {gen_timestamp} us is "
                    f"{gen_timestamp - now} us after reception at {now} us"
                )
            self.skew_violations += 1
            gen_timestamp = now
        self.advance(now)
        if gen_timestamp > self.last_fresh_timestamp:
            self.last_fresh_timestamp = gen_timestamp
            self.delivery_count += 1
            return True
        self.stale_count += 1
        return False

    def time_average_age(self, horizon: Timestamp) -> float:
        """Time-average age in seconds over ``[start, horizon]``.

        ``horizon`` is an absolute timestamp; the tracker is integrated up to
        it first.
        """
        span = horizon - self.start
        if span <= 0:
            raise ValueError(f"horizon must be after start (span {span} us)")
        self.advance(horizon)
        return self.area2 / (2 * span) / US_PER_S


@dataclass(frozen=True)
class NetworkAgeReport:
    per_source_average: dict[Hashable, float]
    naoi: float
    horizon: float  # seconds


def naoi(
    trackers: Mapping[Hashable, AgeTracker] | Sequence[AgeTracker],
    horizon: Timestamp,
) -> NetworkAgeReport:
    """Network age: the arithmetic mean of per-tracker time averages."""
    items = (
        list(trackers.items())
        if isinstance(trackers, Mapping)
        else list(enumerate(trackers))
    )
    if not items:
        raise ValueError("naoi needs at least one tracker")
    per = {key: t.time_average_age(horizon) for key, t in items}
    spans = {horizon - t.start for _, t in items}
    return NetworkAgeReport(
        per_source_average=per,
        naoi=sum(per.values()) / len(per),
        horizon=max(spans) / US_PER_S,
    )
