"""NTP on-wire offset estimation.

T1 and T4 are read from the local clock (request sent, response received);
T2 and T3 from the remote clock (request received, response sent).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable


class InvalidExchange(ValueError):
    pass


@dataclass(frozen=True)
class SyncSample:
    offset: float  # remote minus local, same unit as the inputs
    delay: int | float

    def to_local(self, remote_time: int) -> int:
        return int(round(remote_time - self.offset))


def sync_offset(t1: int, t2: int, t3: int, t4: int) -> SyncSample:
    delay = (t4 - t1) - (t3 - t2)
    if t4 < t1 or delay < 0:
        raise InvalidExchange(f"negative round trip: T=({t1}, {t2}, {t3}, {t4})")
    return SyncSample(((t2 - t1) + (t3 - t4)) / 2, delay)


def best_sample(samples: Iterable[SyncSample]) -> SyncSample:
    """The minimum-delay exchange; earlier samples win ties."""
    samples = list(samples)
    if not samples:
        raise ValueError("no sync samples")
    return min(samples, key=lambda s: s.delay)
