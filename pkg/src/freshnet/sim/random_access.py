"""Slotted random access with binary exponential backoff.

A deliberately simple stand-in for a contention MAC. Time is slotted with
one slot per data frame (largest frame plus turnaround). A backlogged
source transmits with probability ``q`` in each slot. Two or more
transmissions collide; a lone one succeeds with probability ``p``. After a
failed transmission the source first sits out a backoff drawn uniformly
from ``[0, W-1]`` slots and then doubles ``W`` (capped at ``cw_max``); a
success resets ``W`` to ``cw_min``. With ``cw_max == 1`` this is plain
slotted ALOHA with attempt probability ``q``.

Only slots in which someone transmits are simulated, so idle stretches
cost nothing.
"""
from __future__ import annotations

import math

from ..aoi import AgeTracker, naoi
from ..protocol.fragments import fragment
from ..protocol.wire import Kind, Packet
from ..queues import FcfsQueue, Lcfs1Queue, Update
from .config import SimConfig
from .metrics import InstanceMetrics, MetricsLog
from .traffic import CHANNEL_STREAM, MAC_STREAM, TRAFFIC_STREAM, ArrivalStream, Channel, UniformStream, stream_rng


class _Station:
    def __init__(self, sid: int, config: SimConfig) -> None:
        self.sid = sid
        self.queue = (
            Lcfs1Queue() if config.queue == "lcfs1"
            else FcfsQueue(config.fcfs_capacity, config.fcfs_drop, drop_hook=None)
        )
        self.streams: list[tuple[int, ArrivalStream, bytes]] = []
        self.window = config.ra_cw_min
        self.rand = UniformStream(stream_rng(config.seed, MAC_STREAM, sid))
        self.channel = Channel(config.p(sid), stream_rng(config.seed, CHANNEL_STREAM, sid))
        self.backoff = 0
        self.seq = 0
        self.make = None
        self.attempts = 0
        self.failures = 0
        self.drops_by_info: dict[int, int] = {}


class RandomAccessSimulation:
    def __init__(self, config: SimConfig) -> None:
        self.config = cfg = config.validate()
        self.slot_us = max(cfg.data_tx_us(min(t.size_bytes, cfg.mtu_payload)) for t in cfg.traffic)
        self.slot_us = max(self.slot_us + cfg.turnaround_us, 1)
        self.fast = len(cfg.traffic) == 1 and cfg.traffic[0].size_bytes <= cfg.mtu_payload
        self.stations = [_Station(s, cfg) for s in range(cfg.n_sources)]
        self.trackers: dict[tuple, AgeTracker] = {}
        self.partial: dict[tuple, tuple[int, int]] = {}  # key -> (seq, fragments received)
        self.delivered: dict[tuple, int] = {}
        self.payload_bytes: dict[tuple, int] = {}
        for st in self.stations:
            for spec in cfg.traffic:
                key = (st.sid, spec.info_type)
                rng = stream_rng(cfg.seed, TRAFFIC_STREAM, st.sid, spec.info_type)
                st.streams.append((spec.info_type, ArrivalStream(spec, rng), bytes(spec.size_bytes)))
                self.trackers[key] = AgeTracker(start=0)
                self.delivered[key] = 0
                self.payload_bytes[key] = 0
            if self.fast:
                info, _, payload = st.streams[0]
                st.make = self._single_packet_maker(st, info, payload)
            else:
                st.queue.drop_hook = (lambda u, _st=st: _st.drops_by_info.__setitem__(
                    u.info_type, _st.drops_by_info.get(u.info_type, 0) + 1))

    def _feed(self, st: _Station, now: int) -> None:
        if self.fast:
            times = st.streams[0][1].take_until(now)
            if times:
                st.queue.offer_batch(times, st.make)
            return
        batches = []
        for info, stream, payload in st.streams:
            times = stream.take_until(now)
            batches.extend((int(t), info, payload) for t in times)
        batches.sort(key=lambda b: (b[0], b[1]))
        for t, info, payload in batches:
            for pkt in self._packetise(st, t, payload, info):
                st.queue.push(pkt)

    @staticmethod
    def _single_packet_maker(st: _Station, info: int, payload: bytes):
        def make(t: int) -> Packet:
            seq = st.seq
            st.seq = (seq + 1) & 0xFFFFFFFF
            return Packet(Kind.DATA, st.sid, info, seq, 0, 1, t, payload=payload)

        return make

    def _packetise(self, st: _Station, t: int, payload: bytes, info: int):
        seq = st.seq
        st.seq = (seq + 1) & 0xFFFFFFFF
        return fragment(Update(t, payload, info), self.config.mtu_payload, st.sid, seq)

    def _next_arrival(self, st: _Station) -> int:
        return min(stream.peek() for _, stream, _ in st.streams)

    def _schedule(self, st: _Station, from_slot: int) -> int:
        """Slot of the station's next transmission, starting at ``from_slot``."""
        counter, st.backoff = st.backoff, 0
        q = self.config.ra_attempt_prob
        extra = 0
        if q < 1.0:
            u = st.rand.next()
            extra = int(math.log1p(-u) / math.log1p(-q)) if u > 0 else 0
        return from_slot + counter + extra

    def _wake(self, st: _Station, from_slot: int) -> int:
        if len(st.queue):
            return self._schedule(st, from_slot)
        a = self._next_arrival(st)
        return self._schedule(st, max(from_slot, -(-a // self.slot_us)))

    def _deliver(self, pkt, now: int) -> None:
        key = pkt.key
        if pkt.frag_total > 1:
            seq, got = self.partial.get(key, (None, 0))
            if seq != pkt.seq:
                got = 0
            got += 1
            self.partial[key] = (pkt.seq, got)
            if got < pkt.frag_total:
                return
            size = (pkt.frag_total - 1) * self.config.mtu_payload + len(pkt.payload)
        else:
            size = len(pkt.payload)
        self.trackers[key].observe_delivery(pkt.gen_timestamp, now)
        self.delivered[key] += 1
        self.payload_bytes[key] += size

    def _failed(self, st: _Station) -> None:
        st.failures += 1
        st.backoff = int(st.rand.next() * st.window)
        st.window = min(2 * st.window, self.config.ra_cw_max)

    def run(self) -> MetricsLog:
        cfg = self.config
        horizon = cfg.horizon_us
        slot_us = self.slot_us
        last_slot = horizon // slot_us  # a transmission in slot k ends at (k+1)*slot_us
        stations = self.stations
        nxt = [self._wake(st, 0) for st in stations]
        collisions = 0
        while True:
            k = min(nxt)
            if k + 1 > last_slot:
                break
            start = k * slot_us
            senders = []
            for i in [i for i, s in enumerate(nxt) if s == k]:
                st = stations[i]
                self._feed(st, start)
                if len(st.queue):
                    senders.append(st)
                else:
                    nxt[i] = self._wake(st, k)
                    if nxt[i] == k:
                        nxt[i] = k + 1
            if not senders:
                continue
            end = start + slot_us
            if len(senders) == 1:
                st = senders[0]
                st.attempts += 1
                if st.channel.success():
                    self._deliver(st.queue.take(), end)
                    st.window = cfg.ra_cw_min
                else:
                    self._failed(st)
            else:
                collisions += 1
                for st in senders:
                    st.attempts += 1
                    self._failed(st)
            for st in senders:
                if not len(st.queue):
                    # deferring the feed while backlogged is exact: offer_batch
                    # equals sequential pushes when no pop intervenes
                    self._feed(st, end)
                nxt[st.sid] = self._wake(st, k + 1)
        return self._metrics(horizon, collisions)

    def _metrics(self, horizon: int, collisions: int) -> MetricsLog:
        cfg = self.config
        for st in self.stations:
            self._feed(st, horizon)
        report = naoi(self.trackers, horizon)
        rows = []
        for st in self.stations:
            queued_by_info: dict[int, int] = {}
            for item in getattr(st.queue, "items", [st.queue.slot] if isinstance(st.queue, Lcfs1Queue) else []):
                if item is not None and item.frag_index == item.frag_total - 1:
                    queued_by_info[item.info_type] = queued_by_info.get(item.info_type, 0) + 1
            for info, stream, _ in st.streams:
                key = (st.sid, info)
                drops = st.queue.discarded if self.fast else st.drops_by_info.get(info, 0)
                rows.append(InstanceMetrics(
                    source_id=st.sid,
                    info_type=info,
                    average_age_s=report.per_source_average[key],
                    deliveries=self.delivered[key],
                    fresh_deliveries=self.trackers[key].delivery_count,
                    generated=stream.generated,
                    drops=drops,
                    queued=queued_by_info.get(info, 0),
                    polls=0,
                    timeouts=st.failures if len(st.streams) == 1 else 0,
                    payload_bytes=self.payload_bytes[key],
                ))
        horizon_s = horizon / 1e6
        return MetricsLog(
            config_hash=cfg.config_hash(),
            policy="none",
            access=cfg.access,
            queue=cfg.queue,
            n_sources=cfg.n_sources,
            lambda_hz=cfg.lambda_hz,
            seed=cfg.seed,
            horizon_s=horizon_s,
            naoi_s=report.naoi,
            throughput_bps=sum(r.payload_bytes for r in rows) * 8 / horizon_s,
            deliveries=sum(r.deliveries for r in rows),
            drops=sum(r.drops for r in rows),
            timeouts=sum(st.failures for st in self.stations),
            instances=rows,
            extra={
                "collisions": collisions,
                "slot_us": self.slot_us,
                "attempts": sum(st.attempts for st in self.stations),
            },
        )
