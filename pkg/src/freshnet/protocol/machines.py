"""Source and destination automata.

Both machines are pure event handlers: ``step(event)`` mutates the machine
and returns the actions to perform. Sockets, timers and clocks belong to the
driver, so the same objects run inside the simulator and the UDP harness.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from ..aoi import DEFAULT_SKEW_BOUND_US, AgeTracker, CausalityError
from ..queues import FragmentFifo, Lcfs1Queue, Update
from ..scheduling import LogEvent, MaxWeight, Reception, SourceEstimate
from .fragments import Reassembly, fragment
from .wire import DEFAULT_MTU_PAYLOAD, Kind, Packet, empty, poll

AWAIT_POLL = "await_poll"
DRAINING = "draining"
AWAIT_DATA = "await_data"
DECIDING = "deciding"


@dataclass(frozen=True, slots=True)
class PollReceived:
    packet: Packet


@dataclass(frozen=True, slots=True)
class UpdateGenerated:
    update: Update


@dataclass(frozen=True, slots=True)
class Received:
    packet: Packet
    now: int


@dataclass(frozen=True, slots=True)
class TimeoutExpired:
    now: int


SourceEvent = Union[PollReceived, UpdateGenerated]
DestinationEvent = Union[Received, TimeoutExpired]


@dataclass(frozen=True, slots=True)
class SendPoll:
    packet: Packet
    deadline: int  # absolute time at which the poll times out


@dataclass(frozen=True, slots=True)
class Delivered:
    key: tuple
    update: Update  # gen_timestamp already mapped to the local clock
    now: int
    fresh: bool


class SourceMachine:
    """One (source, information type) instance.

    Updates wait in ``queue`` (LCFS-1 by default) and leave only when a poll
    arrives. An update larger than ``mtu_payload`` is split into fragments
    that are sent one per poll; the next fragment goes out only when a poll
    acknowledges the previous one, otherwise the current one is repeated.
    """

    def __init__(
        self,
        source_id: int,
        info_type: int = 0,
        queue=None,
        mtu_payload: int = DEFAULT_MTU_PAYLOAD,
        abandon_after: Optional[int] = None,
    ) -> None:
        self.source_id = source_id
        self.info_type = info_type
        self.queue = queue if queue is not None else Lcfs1Queue()
        self.frag_fifo = FragmentFifo()
        self.mtu_payload = mtu_payload
        self.abandon_after = abandon_after
        self.state = AWAIT_POLL
        self.next_seq = 0
        self.current: Optional[Packet] = None  # last fragment sent while draining
        self.repeats = 0
        self.polls_received = 0
        self.malformed_polls = 0
        self.empties_sent = 0
        self.released = 0
        self.retransmissions = 0
        self.abandoned = 0

    @property
    def key(self) -> tuple[int, int]:
        return (self.source_id, self.info_type)

    def step(self, event: SourceEvent) -> list[Packet]:
        if isinstance(event, UpdateGenerated):
            self.queue.push(event.update)
            return []
        pkt = event.packet
        if pkt.kind is not Kind.POLL or pkt.key != self.key:
            self.malformed_polls += 1
            return []
        self.polls_received += 1
        if self.state == DRAINING:
            return [self._continue(pkt)]
        return [self._release()]

    def offer_batch(self, gen_times, make) -> None:
        """Push a sorted run of arrivals (same result as one event each)."""
        self.queue.offer_batch(gen_times, make)

    def _release(self) -> Packet:
        update = self.queue.take()
        if update is None:
            self.empties_sent += 1
            return empty(self.source_id, self.info_type)
        self.released += 1
        seq = self.next_seq
        self.next_seq = (seq + 1) & 0xFFFFFFFF
        packets = fragment(update, self.mtu_payload, self.source_id, seq)
        if len(packets) == 1:
            return packets[0]
        for p in packets[1:]:
            self.frag_fifo.push(p)
        self.current = packets[0]
        self.repeats = 0
        self.state = DRAINING
        return self.current

    def _continue(self, pkt: Packet) -> Packet:
        cur = self.current
        acked = (pkt.seq, pkt.frag_index, pkt.frag_total) == (cur.seq, cur.frag_index, cur.frag_total)
        if acked:
            nxt = self.frag_fifo.pop()
            if nxt is None:
                self._finish()
                return self._release()
            self.current = nxt
            self.repeats = 0
            return nxt
        self.repeats += 1
        if self.abandon_after is not None and self.repeats > self.abandon_after:
            self.abandoned += 1
            self._finish()
            return self._release()
        self.retransmissions += 1
        return cur

    def _finish(self) -> None:
        self.frag_fifo.clear()
        self.current = None
        self.state = AWAIT_POLL

    @property
    def in_flight(self) -> int:
        """Updates partly transmitted (0 or 1)."""
        return 1 if self.state == DRAINING else 0


def source_step(machine: SourceMachine, event: SourceEvent) -> tuple[SourceMachine, list[Packet]]:
    return machine, machine.step(event)


class SourceNode:
    """A physical source hosting one machine per information type."""

    def __init__(self, source_id: int, machines: Optional[dict[int, SourceMachine]] = None) -> None:
        self.source_id = source_id
        self.machines: dict[int, SourceMachine] = machines or {}
        self.misrouted = 0

    def add(self, info_type: int, **kwargs) -> SourceMachine:
        m = SourceMachine(self.source_id, info_type, **kwargs)
        self.machines[info_type] = m
        return m

    def on_poll(self, pkt: Packet) -> list[Packet]:
        m = self.machines.get(pkt.info_type)
        if m is None or pkt.source_id != self.source_id:
            self.misrouted += 1
            return []
        return m.step(PollReceived(pkt))


@dataclass
class InstanceState:
    key: tuple
    estimate: SourceEstimate
    tracker: AgeTracker
    reassembly: Reassembly = field(default_factory=Reassembly)
    polls: int = 0
    timeouts: int = 0
    receptions: int = 0
    empties: int = 0
    completed: int = 0
    payload_bytes: int = 0
    unsolicited: int = 0
    causality_errors: int = 0


class DestinationMachine:
    """Polls instances one at a time and tracks their age.

    Every reply from the polled instance and every timeout produce exactly
    one POLL. Packets from any other instance (late replies, registrations)
    are absorbed into the estimates without triggering a poll, so at most
    one poll is ever outstanding.
    """

    def __init__(
        self,
        policy=None,
        timeout_us: int = 300_000,
        window_us: int = 500_000,
        start: int = 0,
        skew_bound_us: int = DEFAULT_SKEW_BOUND_US,
        auto_register: bool = True,
    ) -> None:
        self.policy = policy if policy is not None else MaxWeight()
        self.timeout_us = timeout_us
        self.window_us = window_us
        self.start = start
        self.skew_bound_us = skew_bound_us
        self.auto_register = auto_register
        self.instances: dict[tuple, InstanceState] = {}
        self._estimates: list[SourceEstimate] = []
        self.offsets: dict[int, float] = {}
        self.outstanding: Optional[tuple] = None
        self.deadline: Optional[int] = None
        self.state = AWAIT_DATA
        self.ignored = 0
        self.rejected = 0
        self.delivery_hook: Optional[Callable[[Delivered], None]] = None

    def register(self, key: tuple, now: Optional[int] = None) -> InstanceState:
        if key in self.instances:
            return self.instances[key]
        t0 = self.start if now is None else now
        inst = InstanceState(
            key,
            SourceEstimate(key, start=t0, window_us=self.window_us),
            AgeTracker(start=t0, skew_bound_us=self.skew_bound_us),
        )
        self.instances[key] = inst
        self._estimates = [self.instances[k].estimate for k in sorted(self.instances)]
        return inst

    def set_offset(self, source_id: int, offset_us: float) -> None:
        """Clock offset of a source (remote minus local), used to map its timestamps."""
        self.offsets[source_id] = offset_us

    def to_local(self, source_id: int, remote_ts: int) -> int:
        off = self.offsets.get(source_id)
        return remote_ts if off is None else int(round(remote_ts - off))

    def step(self, event: DestinationEvent) -> list:
        if isinstance(event, TimeoutExpired):
            return self._on_timeout(event.now)
        return self._on_packet(event.packet, event.now)

    def _on_timeout(self, now: int) -> list:
        if self.outstanding is not None:
            self.instances[self.outstanding].timeouts += 1
        return self._poll_next(now)

    def _on_packet(self, pkt: Packet, now: int) -> list:
        if pkt.kind not in (Kind.DATA, Kind.EMPTY, Kind.FRAG):
            self.ignored += 1
            return []
        key = pkt.key
        inst = self.instances.get(key)
        if inst is None:
            if not self.auto_register:
                self.rejected += 1
                return []
            inst = self.register(key, now)
        solicited = key == self.outstanding or self.outstanding is None
        if not solicited:
            inst.unsolicited += 1
        actions: list = []
        est = inst.estimate
        inst.receptions += 1
        if pkt.kind is Kind.EMPTY:
            inst.empties += 1
            est.record(LogEvent.EMPTY_RECEIVED, now)
            est.on_reception(Reception.EMPTY, now)
        else:
            est.record(LogEvent.DATA_RECEIVED, now)
            local_ts = self.to_local(pkt.source_id, pkt.gen_timestamp)
            update = inst.reassembly.add(pkt)
            if update is None:
                est.on_reception(Reception.PARTIAL, now, local_ts)
            else:
                try:
                    fresh = inst.tracker.observe_delivery(local_ts, now)
                except CausalityError:
                    inst.causality_errors += 1
                    fresh = None
                if fresh is not None:
                    est.on_reception(Reception.DATA, now, min(local_ts, now))
                    inst.completed += 1
                    inst.payload_bytes += update.payload_size
                    d = Delivered(key, Update(local_ts, update.payload, update.info_type), now, fresh)
                    actions.append(d)
                    if self.delivery_hook is not None:
                        self.delivery_hook(d)
        if solicited:
            actions.extend(self._poll_next(now))
        return actions

    def _poll_next(self, now: int) -> list:
        if not self._estimates:
            self.outstanding = None
            self.deadline = None
            return []
        self.state = DECIDING
        key = self.policy.select(self._estimates, now).chosen
        inst = self.instances[key]
        inst.estimate.record(LogEvent.POLL_SENT, now)
        inst.polls += 1
        self.outstanding = key
        self.deadline = now + self.timeout_us
        self.state = AWAIT_DATA
        return [SendPoll(poll(key[0], key[1], inst.reassembly.last_ack), self.deadline)]

    def kick(self, now: int) -> list:
        """Issue the first poll when nothing is outstanding."""
        if self.outstanding is not None:
            return []
        return self._poll_next(now)


def destination_step(machine: DestinationMachine, event: DestinationEvent) -> tuple[DestinationMachine, list]:
    return machine, machine.step(event)
