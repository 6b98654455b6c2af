"""Polling multiple access driven by the protocol automata.

One decision at a time: the destination chooses an instance, the poll and
the reply take airtime, and the reply either arrives (Bernoulli(p) channel)
or the destination times out. Arrivals are fed to a source lazily, just
before it handles a poll; queues only change at pushes and pops, so this
is exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..aoi import naoi
from ..protocol.machines import (
    DestinationMachine,
    PollReceived,
    Received,
    SendPoll,
    SourceMachine,
    TimeoutExpired,
)
from ..protocol.wire import Kind, Packet
from ..queues import FcfsQueue, Lcfs1Queue, Update
from ..scheduling import make_policy
from .config import SimConfig
from .events import EventQueue
from .metrics import InstanceMetrics, MetricsLog
from .traffic import CHANNEL_STREAM, TRAFFIC_STREAM, ArrivalStream, Channel, stream_rng


def make_queue(config: SimConfig):
    if config.queue == "lcfs1":
        return Lcfs1Queue()
    return FcfsQueue(config.fcfs_capacity, config.fcfs_drop)


@dataclass
class Trace:
    """Inputs fed to the automata, and the actions they produced."""

    records: list = field(default_factory=list)

    def arrivals(self, key, times) -> None:
        self.records.append(("arrivals", key, tuple(int(t) for t in times)))

    def source(self, key, event, actions) -> None:
        self.records.append(("source", key, event, tuple(actions)))

    def destination(self, event, actions) -> None:
        self.records.append(("destination", event, tuple(actions)))


class _Feed:
    __slots__ = ("machine", "stream", "make")

    def __init__(self, machine: SourceMachine, stream: ArrivalStream, payload: bytes, info: int):
        self.machine = machine
        self.stream = stream
        self.make = lambda t, _p=payload, _i=info: Update(t, _p, _i)


def build_machines(config: SimConfig, truth=None):
    """Fresh source machines and destination for ``config``."""
    policy = make_policy(config.policy, truth)
    dest = DestinationMachine(
        policy=policy,
        timeout_us=config.timeout_us,
        window_us=config.window_us,
        start=0,
        auto_register=False,
    )
    sources: dict[tuple, SourceMachine] = {}
    for s in range(config.n_sources):
        for spec in config.traffic:
            m = SourceMachine(
                s, spec.info_type, make_queue(config), config.mtu_payload, config.abandon_after
            )
            sources[m.key] = m
            dest.register(m.key, 0)
    return sources, dest


class PollingSimulation:
    def __init__(self, config: SimConfig, record_trace: bool = False) -> None:
        self.config = config.validate()
        self.trace: Optional[Trace] = Trace() if record_trace else None
        truth = self._truth if config.policy == "mw-oracle" else None
        self.sources, self.dest = build_machines(config, truth)
        self.feeds: dict[tuple, _Feed] = {}
        for s in range(config.n_sources):
            for spec in config.traffic:
                key = (s, spec.info_type)
                rng = stream_rng(config.seed, TRAFFIC_STREAM, s, spec.info_type)
                self.feeds[key] = _Feed(
                    self.sources[key], ArrivalStream(spec, rng), bytes(spec.size_bytes), spec.info_type
                )
        self.channels = [
            Channel(config.p(s), stream_rng(config.seed, CHANNEL_STREAM, s))
            for s in range(config.n_sources)
        ]
        self.lost = {key: 0 for key in self.sources}
        self.in_air: Optional[tuple] = None
        self._tx_cache: dict[int, int] = {}

    def _frame_us(self, pkt: Packet) -> int:
        if pkt.kind is Kind.EMPTY or pkt.kind is Kind.POLL:
            return self.config.poll_tx_us
        n = len(pkt.payload)
        us = self._tx_cache.get(n)
        if us is None:
            us = self._tx_cache[n] = self.config.data_tx_us(n)
        return us

    def _feed(self, key: tuple, now: int) -> None:
        f = self.feeds[key]
        times = f.stream.take_until(now)
        if len(times):
            if self.trace is not None:
                self.trace.arrivals(key, times)
            f.machine.offer_batch(times, f.make)

    def _truth(self, key: tuple, now: int) -> tuple[float, float, float]:
        self._feed(key, now)
        m = self.sources[key]
        age = self.dest.instances[key].tracker.age_at_us(now)
        if m.current is not None:
            hol = now - m.current.gen_timestamp
        else:
            head = m.queue.peek()
            hol = age if head is None else now - head.gen_timestamp
        p = self.config.p(key[0])
        if self.config.poll_loss:
            p *= p
        return p, age / 1e6, min(hol, age) / 1e6

    def _dest_step(self, event) -> list:
        actions = self.dest.step(event)
        if self.trace is not None:
            self.trace.destination(event, actions)
        return actions

    def run(self) -> MetricsLog:
        cfg = self.config
        horizon = cfg.horizon_us
        eq = EventQueue()
        actions = self._dest_step(TimeoutExpired(0))
        while True:
            poll_action = next(a for a in actions if isinstance(a, SendPoll))
            pkt = poll_action.packet
            key = pkt.key
            t = eq.now
            poll_end = t + cfg.turnaround_us + cfg.poll_tx_us
            if poll_end > horizon:
                break
            channel = self.channels[key[0]]
            if cfg.poll_loss and not channel.success():
                eq.push(poll_end + cfg.timeout_us, TimeoutExpired(poll_end + cfg.timeout_us))
            else:
                self._feed(key, poll_end)
                ev = PollReceived(pkt)
                replies = self.sources[key].step(ev)
                if self.trace is not None:
                    self.trace.source(key, ev, replies)
                reply = replies[0]
                rx_end = poll_end + cfg.turnaround_us + self._frame_us(reply)
                if channel.success():
                    if rx_end > horizon:
                        self.in_air = (key, reply)
                        break
                    eq.push(rx_end, Received(reply, rx_end))
                else:
                    if reply.kind is Kind.DATA:
                        self.lost[key] += 1
                    eq.push(poll_end + cfg.timeout_us, TimeoutExpired(poll_end + cfg.timeout_us))
            if eq.peek_time() > horizon:
                break
            _, event = eq.pop()
            actions = self._dest_step(event)
        return self._metrics(horizon)

    def _metrics(self, horizon: int) -> MetricsLog:
        cfg = self.config
        for key in self.feeds:
            self._feed(key, horizon)
        trackers = {k: inst.tracker for k, inst in self.dest.instances.items()}
        report = naoi(trackers, horizon)
        rows = []
        for key in sorted(self.sources):
            m = self.sources[key]
            inst = self.dest.instances[key]
            in_flight = 0
            if m.current is not None:
                r = inst.reassembly
                if not (r.done and r.seq == m.current.seq):
                    in_flight = 1
            if self.in_air is not None and self.in_air[0] == key and self.in_air[1].kind is Kind.DATA:
                in_flight += 1
            rows.append(InstanceMetrics(
                source_id=key[0],
                info_type=key[1],
                average_age_s=report.per_source_average[key],
                deliveries=inst.completed,
                fresh_deliveries=inst.tracker.delivery_count,
                generated=self.feeds[key].stream.generated,
                drops=m.queue.discarded + m.abandoned,
                lost=self.lost[key],
                in_flight=in_flight,
                queued=len(m.queue),
                polls=inst.polls,
                timeouts=inst.timeouts,
                payload_bytes=inst.payload_bytes,
            ))
        horizon_s = horizon / 1e6
        return MetricsLog(
            config_hash=cfg.config_hash(),
            policy=cfg.policy,
            access=cfg.access,
            queue=cfg.queue,
            n_sources=cfg.n_sources,
            lambda_hz=cfg.lambda_hz,
            seed=cfg.seed,
            horizon_s=horizon_s,
            naoi_s=report.naoi,
            throughput_bps=sum(r.payload_bytes for r in rows) * 8 / horizon_s,
            deliveries=sum(r.deliveries for r in rows),
            drops=sum(r.drops + r.lost for r in rows),
            timeouts=sum(r.timeouts for r in rows),
            instances=rows,
        )


def replay(config: SimConfig, trace: Trace) -> bool:
    """Feed a recorded trace to fresh automata; True if every action matches."""
    if config.policy == "mw-oracle":
        raise ValueError("oracle runs depend on simulator state and cannot be replayed")
    sources, dest = build_machines(config)
    makers = {}
    for spec in config.traffic:
        payload = bytes(spec.size_bytes)
        makers[spec.info_type] = (lambda t, _p=payload, _i=spec.info_type: Update(t, _p, _i))
    for rec in trace.records:
        if rec[0] == "arrivals":
            _, key, times = rec
            sources[key].offer_batch(list(times), makers[key[1]])
        elif rec[0] == "source":
            _, key, event, actions = rec
            if tuple(sources[key].step(event)) != actions:
                return False
        else:
            _, event, actions = rec
            if tuple(dest.step(event)) != actions:
                return False
    return True
