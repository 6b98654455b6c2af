"""Destination process: sync, poll, measure."""
from __future__ import annotations

import csv
import json
import logging
import math
import socket
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

from ..aoi import AgeTracker, naoi
from ..protocol.machines import Delivered, DestinationMachine, Received, SendPoll, TimeoutExpired
from ..protocol.sync import InvalidExchange, SyncSample, best_sample, sync_offset
from ..protocol.wire import HEADER_LEN, DecodeError, Kind, Packet, decode, encode
from ..scheduling import MaxWeight
from ..sim.metrics import CSV_COLUMNS, MetricsLog, write_csv
from .clock import Clock
from .config import HarnessConfig, parse_addr
from .sensors import payload_ok

log = logging.getLogger(__name__)

TIMER_SLACK_US = 10_000
MAX_DATAGRAM = 65_535


class _SyncSession:
    """R sequential on-wire exchanges with one source."""

    def __init__(self, source_id: int, rounds: int, timeout_us: int, max_attempts: int) -> None:
        self.source_id = source_id
        self.rounds = rounds
        self.timeout_us = timeout_us
        self.max_attempts = max_attempts
        self.samples: list[SyncSample] = []
        self.attempts = 0
        self.pending: Optional[tuple[int, int]] = None  # (seq, t1)
        self.next_seq = 0

    @property
    def finished(self) -> bool:
        return len(self.samples) >= self.rounds or self.attempts >= self.max_attempts

    def request(self, now: int) -> Packet:
        seq = self.next_seq
        self.next_seq += 1
        self.attempts += 1
        self.pending = (seq, now)
        return Packet(Kind.SYNC_REQ, self.source_id, 0, seq, aux=(now, 0, 0))

    def due(self, now: int) -> bool:
        return self.pending is not None and now - self.pending[1] >= self.timeout_us

    def response(self, pkt: Packet, now: int) -> bool:
        if self.pending is None or pkt.seq != self.pending[0] or pkt.aux[0] != self.pending[1]:
            return False
        self.pending = None
        t1, t2, t3 = pkt.aux
        try:
            self.samples.append(sync_offset(t1, t2, t3, now))
        except InvalidExchange:
            log.warning("source %d: discarded inconsistent sync exchange", self.source_id)
        return True


@dataclass
class InstanceReport:
    source_id: int
    info_type: int
    polls: int
    timeouts: int
    deliveries: int
    corrupt: int
    average_age_s: float


@dataclass
class DestinationReport:
    metrics: MetricsLog
    instances: list[InstanceReport] = field(default_factory=list)
    offsets_us: dict = field(default_factory=dict)
    sync_delay_us: dict = field(default_factory=dict)
    drift_us: dict = field(default_factory=dict)
    timer_lateness_us: dict = field(default_factory=dict)
    decode_errors: int = 0
    corrupt: int = 0
    deliveries_log: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, default=str)


def recompute_naoi(entries: list[tuple]) -> float:
    """NAoI from a raw delivery log of ("register", sid, info, t) /
    ("deliver", sid, info, gen, now) / ("end", t) entries."""
    trackers: dict[tuple, AgeTracker] = {}
    end = None
    for e in entries:
        if e[0] == "register":
            trackers[(e[1], e[2])] = AgeTracker(start=e[3])
        elif e[0] == "deliver":
            trackers[(e[1], e[2])].observe_delivery(e[3], e[4])
        elif e[0] == "end":
            end = e[1]
    live = {k: t for k, t in trackers.items() if end is not None and end > t.start}
    if not live:
        return math.nan
    return naoi(live, end).naoi


class DestinationServer:
    def __init__(self, config: HarnessConfig, clock: Optional[Callable[[], int]] = None,
                 on_ready: Optional[Callable[[tuple], None]] = None) -> None:
        self.config = config.validate()
        self.clock = clock or Clock()
        self.on_ready = on_ready
        self.timeout_us = int(config.timeout_ms * 1000)
        self.machine = DestinationMachine(
            policy=MaxWeight(), timeout_us=self.timeout_us, start=self.clock(), auto_register=False
        )
        self.addrs: dict[int, tuple] = {}
        self.sessions: dict[int, _SyncSession] = {}
        self.synced: set[int] = set()
        self.announced: dict[int, set[int]] = {}
        self.deadline: Optional[int] = None
        self.pending_poll: Optional[tuple[SendPoll, int]] = None  # (action, earliest send time)
        self.last_poll_sent: Optional[int] = None
        self.min_poll_gap = None if config.poll_rate_hz is None else int(1e6 / config.poll_rate_hz)
        self.next_resync: dict[int, int] = {}
        self.corrupt: dict[tuple, int] = {}
        self.lateness: list[int] = []
        self.decode_errors = 0
        self.entries: list[tuple] = []
        self.offsets: dict[int, float] = {}
        self.sync_delay: dict[int, int] = {}
        self.drift: dict[int, list[float]] = {}
        self.mtu = config.mtu_payload + HEADER_LEN
        self._csv = None
        self._delivery_csv = None

    # -- sending -------------------------------------------------------
    def _send(self, pkt: Packet) -> None:
        addr = self.addrs.get(pkt.source_id)
        if addr is None:
            return
        try:
            self.sock.sendto(encode(pkt, self.mtu), addr)
        except OSError as exc:
            log.warning("send to source %d failed: %s", pkt.source_id, exc)

    def _actions(self, actions: list, now: int) -> None:
        for a in actions:
            if isinstance(a, SendPoll):
                earliest = now
                if self.min_poll_gap is not None and self.last_poll_sent is not None:
                    earliest = max(now, self.last_poll_sent + self.min_poll_gap)
                self.pending_poll = (a, earliest)
                self.deadline = None
                self._flush_poll(now)
            elif isinstance(a, Delivered):
                self._delivered(a)

    def _flush_poll(self, now: int) -> None:
        if self.pending_poll is None or now < self.pending_poll[1]:
            return
        action, _ = self.pending_poll
        self.pending_poll = None
        self._send(action.packet)
        self.last_poll_sent = now
        self.deadline = now + self.timeout_us

    def _delivered(self, d: Delivered) -> None:
        ok = payload_ok(d.update.payload)
        if not ok:
            self.corrupt[d.key] = self.corrupt.get(d.key, 0) + 1
            log.error("instance %s: delivered payload failed its digest check", d.key)
        entry = ("deliver", d.key[0], d.key[1], d.update.gen_timestamp, d.now)
        self.entries.append(entry)
        if self._delivery_csv is not None:
            self._delivery_csv.writerow(
                list(entry) + [d.update.payload[:8].hex(), int(ok), int(d.fresh)]
            )

    # -- receiving -----------------------------------------------------
    def _on_datagram(self, data: bytes, addr, now: int) -> None:
        try:
            pkt = decode(data)
        except DecodeError as exc:
            self.decode_errors += 1
            log.warning("dropping datagram from %s: %s", addr, exc)
            return
        sid = pkt.source_id
        if pkt.kind is Kind.SYNC_RESP:
            session = self.sessions.get(sid)
            if session is not None and session.response(pkt, now):
                self._sync_progress(session, now)
            return
        if pkt.kind not in (Kind.DATA, Kind.EMPTY, Kind.FRAG):
            return
        if sid not in self.synced:
            if pkt.kind is Kind.EMPTY:
                self.addrs[sid] = addr
                self.announced.setdefault(sid, set()).add(pkt.info_type)
                if sid not in self.sessions:
                    self._start_sync(sid, now)
            return
        self.addrs[sid] = addr
        if pkt.key not in self.machine.instances:
            self._register(pkt.key, now)
            if pkt.kind is Kind.EMPTY:
                return
        self._actions(self.machine.step(Received(pkt, now)), now)
        if self.machine.outstanding is None:
            self._actions(self.machine.kick(now), now)

    # -- sync and registration -----------------------------------------
    def _start_sync(self, sid: int, now: int) -> None:
        cfg = self.config
        session = _SyncSession(sid, cfg.sync_rounds, int(cfg.sync_timeout_ms * 1000), 3 * cfg.sync_rounds)
        self.sessions[sid] = session
        self._send(session.request(now))

    def _sync_progress(self, session: _SyncSession, now: int) -> None:
        sid = session.source_id
        if not session.finished:
            self._send(session.request(now))
            return
        del self.sessions[sid]
        if session.samples:
            best = best_sample(session.samples)
            if sid in self.offsets:
                self.drift.setdefault(sid, []).append(best.offset - self.offsets[sid])
            self.offsets[sid] = best.offset
            self.sync_delay[sid] = int(best.delay)
            self.machine.set_offset(sid, best.offset)
            log.info("source %d: offset %.1f us, delay %d us", sid, best.offset, best.delay)
        elif sid not in self.synced:
            log.error("source %d: no sync exchange succeeded; ignoring it", sid)
            self.announced.pop(sid, None)
            return
        if self.config.resync_s is not None:
            self.next_resync[sid] = now + int(self.config.resync_s * 1e6)
        if sid not in self.synced:
            self.synced.add(sid)
            for info in sorted(self.announced.pop(sid, ())):
                self._register((sid, info), now)
        if self.machine.outstanding is None and self.pending_poll is None:
            self._actions(self.machine.kick(now), now)

    def _register(self, key: tuple, now: int) -> None:
        self.machine.register(key, now)
        self.entries.append(("register", key[0], key[1], now))
        if self._delivery_csv is not None:
            self._delivery_csv.writerow(["register", key[0], key[1], now, "", "", "", ""])
        log.info("registered instance %s", key)

    # -- timers --------------------------------------------------------
    def _timers(self, now: int) -> None:
        self._flush_poll(now)
        if self.deadline is not None and now >= self.deadline:
            self.lateness.append(now - self.deadline)
            self.deadline = None
            self._actions(self.machine.step(TimeoutExpired(now)), now)
        for session in list(self.sessions.values()):
            if session.due(now):
                session.pending = None
                if session.finished:
                    self._sync_progress(session, now)
                else:
                    self._send(session.request(now))
        for sid, t in list(self.next_resync.items()):
            if now >= t and sid not in self.sessions:
                del self.next_resync[sid]
                self._start_sync(sid, now)

    def _next_timer(self) -> Optional[int]:
        times = []
        if self.pending_poll is not None:
            times.append(self.pending_poll[1])
        if self.deadline is not None:
            times.append(self.deadline)
        times.extend(s.pending[1] + s.timeout_us for s in self.sessions.values() if s.pending)
        times.extend(self.next_resync.values())
        return min(times) if times else None

    # -- metrics -------------------------------------------------------
    def metrics(self, now: int) -> MetricsLog:
        inst = self.machine.instances
        live = {k: i.tracker for k, i in inst.items() if now > i.tracker.start}
        value = naoi(live, now).naoi if live else math.nan
        elapsed = (now - self.start) / 1e6
        cfg = self.config
        return MetricsLog(
            config_hash=cfg.config_hash(),
            policy="mw",
            access="udp",
            queue="lcfs1",
            n_sources=len(self.synced),
            lambda_hz=0.0,
            seed=cfg.seed,
            horizon_s=elapsed,
            naoi_s=value,
            throughput_bps=sum(i.payload_bytes for i in inst.values()) * 8 / elapsed if elapsed > 0 else 0.0,
            deliveries=sum(i.completed for i in inst.values()),
            drops=sum(self.corrupt.values()),
            timeouts=sum(i.timeouts for i in inst.values()),
        )

    def _write_metrics(self, now: int) -> None:
        if self._csv is not None:
            write_csv([self.metrics(now)], self._csv, header=False)
            self._csv.flush()

    # -- main loop -----------------------------------------------------
    def run(self) -> DestinationReport:
        cfg = self.config
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        try:
            self.sock.bind(parse_addr(cfg.bind))
        except OSError as exc:
            self.sock.close()
            raise OSError(f"cannot bind {cfg.bind}: {exc}") from exc
        files = []
        try:
            if cfg.metrics_out:
                self._csv = open(cfg.metrics_out, "w", newline="")
                files.append(self._csv)
                self._csv.write(",".join(CSV_COLUMNS) + "\n")
            if cfg.delivery_log:
                fh = open(cfg.delivery_log, "w", newline="")
                files.append(fh)
                self._delivery_csv = csv.writer(fh, lineterminator="\n")
                self._delivery_csv.writerow(
                    ["event", "source_id", "info_type", "gen_us", "now_us", "digest", "ok", "fresh"]
                )
            return self._loop()
        finally:
            self.sock.close()
            for fh in files:
                fh.close()

    def _loop(self) -> DestinationReport:
        cfg = self.config
        self.start = self.clock()
        end = self.start + int(cfg.duration_s * 1e6)
        next_flush = self.start + 1_000_000
        if self.on_ready is not None:
            self.on_ready(self.sock.getsockname())
        while True:
            now = self.clock()
            if now >= end:
                break
            self._timers(now)
            if now >= next_flush:
                self._write_metrics(now)
                next_flush += 1_000_000
            wake = min(t for t in (self._next_timer(), next_flush, end) if t is not None)
            wait = max(wake - self.clock(), 0) / 1e6
            self.sock.settimeout(wait if wait > 0 else 1e-6)
            try:
                data, addr = self.sock.recvfrom(MAX_DATAGRAM)
            except socket.timeout:
                continue
            except ConnectionResetError:
                continue
            self._on_datagram(data, addr, self.clock())
        now = max(self.clock(), end)
        self._write_metrics(now)
        self.entries.append(("end", now))
        if self._delivery_csv is not None:
            self._delivery_csv.writerow(["end", "", "", now, "", "", "", ""])
        return self._report(now)

    def _report(self, now: int) -> DestinationReport:
        metrics = self.metrics(now)
        rows = []
        live = {k: i.tracker for k, i in self.machine.instances.items() if now > i.tracker.start}
        per = naoi(live, now).per_source_average if live else {}
        for key in sorted(self.machine.instances):
            i = self.machine.instances[key]
            rows.append(InstanceReport(
                key[0], key[1], i.polls, i.timeouts, i.completed, self.corrupt.get(key, 0),
                per.get(key, math.nan),
            ))
        lat = self.lateness
        report = DestinationReport(
            metrics=metrics,
            instances=rows,
            offsets_us=dict(self.offsets),
            sync_delay_us=dict(self.sync_delay),
            drift_us={k: list(v) for k, v in self.drift.items()},
            timer_lateness_us={
                "count": len(lat),
                "max": max(lat) if lat else 0,
                "mean": sum(lat) / len(lat) if lat else 0.0,
                "over_slack": sum(1 for x in lat if x > TIMER_SLACK_US),
            },
            decode_errors=self.decode_errors,
            corrupt=sum(self.corrupt.values()),
            deliveries_log=list(self.entries),
        )
        if self.config.report_out:
            with open(self.config.report_out, "w") as fh:
                fh.write(report.to_json())
        return report


def run_destination(config: HarnessConfig, on_ready: Optional[Callable[[tuple], None]] = None) -> DestinationReport:
    return DestinationServer(config, on_ready=on_ready).run()
