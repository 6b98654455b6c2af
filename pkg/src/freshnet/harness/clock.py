"""Process clocks in integer microseconds."""
from __future__ import annotations

import time


def monotonic_us() -> int:
    return time.monotonic_ns() // 1000


class Clock:
    """Monotonic clock with an optional fixed offset, for exercising sync."""

    def __init__(self, skew_us: int = 0) -> None:
        if monotonic_us() + skew_us < 0:
            raise ValueError("clock skew would make timestamps negative")
        self.skew_us = skew_us

    def __call__(self) -> int:
        return time.monotonic_ns() // 1000 + self.skew_us
