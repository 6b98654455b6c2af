"""Queueing disciplines for status updates.

``FcfsQueue`` is the conventional bounded FIFO. ``Lcfs1Queue`` keeps only
the freshest update (a head-drop FIFO of size one). ``FragmentFifo`` holds
the fragments of the update currently being drained.

Both update queues offer ``offer_batch``, which pushes a sorted run of
arrivals with the same counters and final contents as pushing them one by
one, but only materialises the updates that survive. The simulators use it
to keep saturated sources cheap.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence


@dataclass(frozen=True, slots=True)
class Update:
    gen_timestamp: int
    payload: bytes = b""
    info_type: int = 0

    @property
    def payload_size(self) -> int:
        return len(self.payload)


DropHook = Callable[[Update], None]
UpdateFactory = Callable[[int], Update]


class FcfsQueue:
    def __init__(
        self,
        capacity: Optional[int] = None,
        drop_policy: str = "tail",
        drop_hook: Optional[DropHook] = None,
    ) -> None:
        if capacity is not None and capacity < 1:
            raise ValueError("capacity must be positive or None")
        if drop_policy not in ("tail", "head"):
            raise ValueError(f"unknown drop policy {drop_policy!r}")
        self.capacity = capacity
        self.drop_policy = drop_policy
        self.drop_hook = drop_hook
        self.items: deque[Update] = deque()
        self.pushed = 0
        self.popped = 0
        self.drop_count = 0

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[Update]:
        return iter(self.items)

    def _drop(self, update: Update) -> None:
        self.drop_count += 1
        if self.drop_hook is not None:
            self.drop_hook(update)

    def push(self, update: Update) -> Optional[Update]:
        """Append at the tail. Returns the dropped update, if any."""
        self.pushed += 1
        if self.capacity is not None and len(self.items) >= self.capacity:
            if self.drop_policy == "tail":
                self._drop(update)
                return update
            victim = self.items.popleft()
            self.items.append(update)
            self._drop(victim)
            return victim
        self.items.append(update)
        return None

    def offer_batch(self, gen_times: Sequence[int], make: UpdateFactory) -> None:
        k = len(gen_times)
        if k == 0:
            return
        if self.drop_hook is not None or self.capacity is None:
            for t in gen_times:
                self.push(make(int(t)))
            return
        self.pushed += k
        if self.drop_policy == "tail":
            free = max(self.capacity - len(self.items), 0)
            for t in gen_times[:free]:
                self.items.append(make(int(t)))
            self.drop_count += max(k - free, 0)
        else:
            keep = min(k, self.capacity)
            overflow = len(self.items) + k - self.capacity
            for _ in range(min(max(overflow, 0), len(self.items))):
                self.items.popleft()
            for t in gen_times[k - keep:]:
                self.items.append(make(int(t)))
            self.drop_count += max(overflow, 0)

    def pop(self) -> Optional[Update]:
        if not self.items:
            return None
        self.popped += 1
        return self.items.popleft()

    take = pop

    def peek(self) -> Optional[Update]:
        return self.items[0] if self.items else None

    @property
    def discarded(self) -> int:
        return self.drop_count


class Lcfs1Queue:
    """Single-slot queue holding the freshest update.

    An equal generation timestamp replaces the occupant (newest push wins).
    """

    def __init__(self) -> None:
        self.slot: Optional[Update] = None
        self.pushed = 0
        self.taken = 0
        self.replaced_count = 0
        self.stale_count = 0

    def __len__(self) -> int:
        return 0 if self.slot is None else 1

    def push(self, update: Update) -> Optional[Update]:
        """Offer ``update``. Returns whichever update was discarded, if any."""
        self.pushed += 1
        current = self.slot
        if current is None:
            self.slot = update
            return None
        if update.gen_timestamp >= current.gen_timestamp:
            self.slot = update
            self.replaced_count += 1
            return current
        self.stale_count += 1
        return update

    def offer_batch(self, gen_times: Sequence[int], make: UpdateFactory) -> None:
        k = len(gen_times)
        if k == 0:
            return
        self.pushed += k
        cur = None if self.slot is None else self.slot.gen_timestamp
        if cur is None or gen_times[0] >= cur:
            self.replaced_count += k - (1 if cur is None else 0)
            self.slot = make(int(gen_times[-1]))
            return
        best = cur
        for t in gen_times:
            if t >= best:
                self.replaced_count += 1
                best = t
            else:
                self.stale_count += 1
        if best != cur:
            self.slot = make(int(best))

    def take(self) -> Optional[Update]:
        update, self.slot = self.slot, None
        if update is not None:
            self.taken += 1
        return update

    pop = take

    def peek(self) -> Optional[Update]:
        return self.slot

    @property
    def discarded(self) -> int:
        return self.replaced_count + self.stale_count


class FragmentFifo:
    """Plain FIFO for the fragments of the update being transmitted."""

    def __init__(self) -> None:
        self._items: deque = deque()

    def __len__(self) -> int:
        return len(self._items)

    def push(self, fragment) -> None:
        self._items.append(fragment)

    def pop(self):
        return self._items.popleft() if self._items else None

    def peek(self):
        return self._items[0] if self._items else None

    def clear(self) -> None:
        self._items.clear()
