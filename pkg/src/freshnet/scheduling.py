"""Poll scheduling: Max-Weight, Maximum-Age-First and round robin.

The destination keeps one ``SourceEstimate`` per instance (a source and one
of its information types). Policies are pure functions of those estimates;
ties go to the lexicographically least instance key so that decisions are
reproducible.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Hashable, Iterable, Optional, Sequence

from .aoi import US_PER_S

DEFAULT_WINDOW_US = 500_000

InstanceKey = tuple  # (source_id, info_type)


class LogEvent(Enum):
    POLL_SENT = "poll"
    DATA_RECEIVED = "data"
    EMPTY_RECEIVED = "empty"


class Reception(Enum):
    DATA = "data"
    EMPTY = "empty"
    PARTIAL = "partial"  # a fragment that does not complete its update


class TimeRegressionError(ValueError):
    pass


def mw_index(p_hat: float, age: float, hol: float) -> float:
    """Weighted potential age reduction ``p * (age - hol)**2``.

    A negative gap (hol ahead of age) is treated as zero.
    """
    gap = age - hol
    if gap <= 0.0:
        return 0.0
    return p_hat * gap * gap


@dataclass
class SourceEstimate:
    """Destination-side view of one instance: age, head-of-line system time
    and channel reliability, plus the poll/reception log over the window."""

    key: InstanceKey
    start: int = 0
    window_us: int = DEFAULT_WINDOW_US
    fresh_timestamp: int = field(init=False)  # age estimate is now - fresh_timestamp
    hol_us: int = field(init=False, default=0)
    inconsistencies: int = field(init=False, default=0)
    _log: deque = field(init=False, repr=False)
    _polls: int = field(init=False, default=0, repr=False)
    _receptions: int = field(init=False, default=0, repr=False)
    _last_event: int = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.fresh_timestamp = self.start
        self._log = deque()
        self._last_event = self.start

    @property
    def source_id(self):
        return self.key[0]

    @property
    def info_type(self):
        return self.key[1]

    def age_us(self, now: int) -> int:
        return now - self.fresh_timestamp

    def age(self, now: int) -> float:
        return (now - self.fresh_timestamp) / US_PER_S

    def hol(self) -> float:
        return self.hol_us / US_PER_S

    def _evict(self, now: int) -> None:
        cutoff = now - self.window_us
        log = self._log
        while log and log[0][0] < cutoff:
            _, kind = log.popleft()
            if kind is LogEvent.POLL_SENT:
                self._polls -= 1
            else:
                self._receptions -= 1

    def record(self, event: LogEvent, now: int) -> None:
        if now < self._last_event:
            raise TimeRegressionError(
                f"{self.key}: event at {now} us precedes {self._last_event} us"
            )
        self._last_event = now
        self._log.append((now, event))
        if event is LogEvent.POLL_SENT:
            self._polls += 1
        else:
            self._receptions += 1
        self._evict(now)

    def counts(self, now: int) -> tuple[int, int]:
        """(polls, receptions) within the window ending at ``now``."""
        self._evict(now)
        return self._polls, self._receptions

    def reliability(self, now: int) -> float:
        """``(receptions + 1) / (polls + 1)`` over the window, capped at 1.

        The cap matters only when a reception outlives its poll at the
        window edge or arrives unsolicited.
        """
        polls, rx = self.counts(now)
        return min(1.0, (rx + 1) / (polls + 1))

    def on_reception(self, kind: Reception, now: int, gen_timestamp: int | None = None) -> None:
        """Update the age and head-of-line estimates after a reception."""
        if kind is Reception.DATA:
            if gen_timestamp is None:
                raise ValueError("data reception needs a generation timestamp")
            if gen_timestamp > self.fresh_timestamp:
                self.fresh_timestamp = min(gen_timestamp, now)
            self.hol_us = now - self.fresh_timestamp
        elif kind is Reception.EMPTY:
            self.hol_us = now - self.fresh_timestamp
        else:
            if gen_timestamp is None:
                raise ValueError("partial reception needs a generation timestamp")
            self.hol_us = min(max(now - gen_timestamp, 0), now - self.fresh_timestamp)

    def index(self, now: int) -> float:
        gap = (now - self.fresh_timestamp) - self.hol_us
        if gap < 0:
            self.inconsistencies += 1
            return 0.0
        g = gap / US_PER_S
        return self.reliability(now) * g * g


# Functional aliases matching the estimator operations.
def reliability_record(estimate: SourceEstimate, event: LogEvent, now: int) -> SourceEstimate:
    estimate.record(event, now)
    return estimate


def reliability_estimate(estimate: SourceEstimate, now: int) -> float:
    return estimate.reliability(now)


def hol_on_reception(
    estimate: SourceEstimate, kind: Reception, gen_timestamp: int | None, now: int
) -> SourceEstimate:
    estimate.on_reception(kind, now, gen_timestamp)
    return estimate


@dataclass(frozen=True)
class PollDecision:
    chosen: InstanceKey
    index_values: dict


def _argmax(values: dict) -> InstanceKey:
    best_key = None
    best = None
    for key in sorted(values):
        v = values[key]
        if best is None or v > best:
            best, best_key = v, key
    return best_key


def mw_select(estimates: Sequence[SourceEstimate], now: int) -> PollDecision:
    if not estimates:
        raise ValueError("mw_select needs at least one instance")
    values = {e.key: e.index(now) for e in estimates}
    return PollDecision(_argmax(values), values)


def maf_select(estimates: Sequence[SourceEstimate], now: int) -> PollDecision:
    if not estimates:
        raise ValueError("maf_select needs at least one instance")
    values = {e.key: e.age(now) for e in estimates}
    return PollDecision(_argmax(values), values)


# Truth oracle: key, now -> (p, age_s, hol_s). Only the simulator can supply it.
Truth = Callable[[InstanceKey, int], tuple[float, float, float]]


class MaxWeight:
    name = "mw"

    def __init__(self, truth: Optional[Truth] = None) -> None:
        self.truth = truth
        if truth is not None:
            self.name = "mw-oracle"

    def select(self, estimates: Sequence[SourceEstimate], now: int) -> PollDecision:
        if self.truth is None:
            return mw_select(estimates, now)
        if not estimates:
            raise ValueError("mw_select needs at least one instance")
        values = {}
        for e in estimates:
            p, age, hol = self.truth(e.key, now)
            values[e.key] = mw_index(p, age, hol)
        return PollDecision(_argmax(values), values)


class MaxAgeFirst:
    name = "maf"

    def select(self, estimates: Sequence[SourceEstimate], now: int) -> PollDecision:
        return maf_select(estimates, now)


class RoundRobin:
    """Cycles through instances in key order, regardless of state."""

    name = "rr"

    def __init__(self) -> None:
        self._last: Optional[Hashable] = None

    def select(self, estimates: Sequence[SourceEstimate], now: int) -> PollDecision:
        if not estimates:
            raise ValueError("round robin needs at least one instance")
        keys = sorted(e.key for e in estimates)
        chosen = keys[0]
        if self._last is not None:
            for k in keys:
                if k > self._last:
                    chosen = k
                    break
        self._last = chosen
        return PollDecision(chosen, {k: float(k == chosen) for k in keys})


POLICIES = {"mw": MaxWeight, "maf": MaxAgeFirst, "rr": RoundRobin}


def make_policy(name: str, truth: Optional[Truth] = None):
    if name == "mw-oracle":
        if truth is None:
            raise ValueError("mw-oracle needs a truth oracle")
        return MaxWeight(truth)
    try:
        return POLICIES[name]()
    except KeyError:
        raise ValueError(f"unknown policy {name!r}; expected one of {sorted(POLICIES)}") from None
