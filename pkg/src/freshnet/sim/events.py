"""Deterministic pending-event set."""
from __future__ import annotations

import heapq
from itertools import count
from typing import Any


class TimeTravelError(ValueError):
    pass


class EventQueue:
    """Min-heap ordered by (time, priority, insertion order)."""

    def __init__(self) -> None:
        self._heap: list = []
        self._seq = count()
        self.now = 0

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, time: int, event: Any, priority: int = 0) -> None:
        if time < self.now:
            raise TimeTravelError(f"event at {time} scheduled before now={self.now}")
        heapq.heappush(self._heap, (time, priority, next(self._seq), event))

    def pop(self) -> tuple[int, Any]:
        time, _, _, event = heapq.heappop(self._heap)
        self.now = time
        return time, event

    def peek_time(self) -> int | None:
        return self._heap[0][0] if self._heap else None
