"""Source process: sensors feed per-type LCFS queues, polls drain them."""
from __future__ import annotations

import json
import logging
import socket
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from ..protocol.machines import SourceNode, UpdateGenerated
from ..protocol.wire import HEADER_LEN, DecodeError, Kind, Packet, decode, empty, encode
from ..queues import Update
from .clock import Clock
from .config import HarnessConfig, parse_addr
from .sensors import PROFILES, SensorEmulator

log = logging.getLogger(__name__)

MAX_DATAGRAM = 65_535


class DestinationUnreachable(RuntimeError):
    pass


@dataclass
class SourceInstanceReport:
    info_type: int
    profile: str
    generated: int
    released: int
    replaced: int
    polls: int
    empties: int
    retransmissions: int


@dataclass
class SourceReport:
    source_id: int
    registered: bool
    sync_requests: int
    instances: list[SourceInstanceReport] = field(default_factory=list)
    decode_errors: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


class SourceClient:
    def __init__(self, config: HarnessConfig, clock: Optional[Callable[[], int]] = None) -> None:
        self.config = config.validate()
        self.clock = clock or Clock(config.clock_skew_us)
        self.peer = parse_addr(config.peer)
        self.node = SourceNode(config.source_id)
        self.mtu = config.mtu_payload + HEADER_LEN
        self.emulators: list[SensorEmulator] = []
        self.sync_requests = 0
        self.decode_errors = 0
        self.registered = False
        self._sent = None

    def _send(self, pkt: Packet) -> None:
        try:
            self.sock.sendto(encode(pkt, self.mtu), self.peer)
        except OSError as exc:
            log.warning("send failed: %s", exc)

    def _announce(self) -> None:
        for info in sorted(self.node.machines):
            self._send(empty(self.config.source_id, info))

    def _on_datagram(self, data: bytes, now: int) -> None:
        try:
            pkt = decode(data)
        except DecodeError as exc:
            self.decode_errors += 1
            log.warning("dropping datagram: %s", exc)
            return
        if pkt.source_id != self.config.source_id:
            return
        if pkt.kind is Kind.SYNC_REQ:
            self.registered = True
            self.sync_requests += 1
            resp = Packet(Kind.SYNC_RESP, pkt.source_id, 0, pkt.seq, aux=(pkt.aux[0], now, self.clock()))
            self._send(resp)
        elif pkt.kind is Kind.POLL:
            self.registered = True
            for out in self.node.on_poll(pkt):
                self._send(out)

    def _emit(self, em: SensorEmulator) -> None:
        t = em.next_due
        payload = em.emit()
        info = em.profile.info_type
        self.node.machines[info].step(UpdateGenerated(Update(t, payload, info)))
        if self._sent is not None:
            self._sent.write(f"{info},{t},{payload[:8].hex()}\n")

    def _recv(self, timeout_us: int) -> Optional[bytes]:
        self.sock.settimeout(max(timeout_us, 1) / 1e6)
        try:
            data, addr = self.sock.recvfrom(MAX_DATAGRAM)
        except (socket.timeout, ConnectionRefusedError, ConnectionResetError):
            return None
        if addr[1] != self.peer[1]:
            return None
        return data

    def run(self) -> SourceReport:
        cfg = self.config
        rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(cfg.source_id,)))
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        try:
            self.sock.bind(parse_addr(cfg.bind))
            if cfg.sent_log:
                self._sent = open(cfg.sent_log, "w")
                self._sent.write("info_type,gen_us,digest\n")
            start = self.clock()
            for name in cfg.profiles:
                prof = PROFILES[name]
                self.node.add(prof.info_type, mtu_payload=cfg.mtu_payload)
                self.emulators.append(SensorEmulator(prof, rng, start, cfg.jitter))
            self._register()
            self._loop(start + int(cfg.duration_s * 1e6))
        finally:
            self.sock.close()
            if self._sent is not None:
                self._sent.close()
        return self._report()

    def _register(self) -> None:
        cfg = self.config
        interval = int(cfg.register_interval_s * 1e6)
        for attempt in range(cfg.register_attempts):
            self._announce()
            deadline = self.clock() + interval
            while not self.registered:
                now = self.clock()
                if now >= deadline:
                    break
                data = self._recv(deadline - now)
                if data is not None:
                    self._on_datagram(data, self.clock())
            if self.registered:
                return
            log.info("no answer from %s (attempt %d)", cfg.peer, attempt + 1)
        raise DestinationUnreachable(
            f"destination {cfg.peer} did not answer {cfg.register_attempts} registration attempts"
        )

    def _loop(self, end: int) -> None:
        while True:
            now = self.clock()
            if now >= end:
                return
            for em in self.emulators:
                while em.next_due <= now:
                    self._emit(em)
            wake = min(min(em.next_due for em in self.emulators), end)
            data = self._recv(wake - self.clock())
            if data is not None:
                self._on_datagram(data, self.clock())

    def _report(self) -> SourceReport:
        rows = []
        by_info = {em.profile.info_type: em for em in self.emulators}
        for info in sorted(self.node.machines):
            m = self.node.machines[info]
            em = by_info[info]
            rows.append(SourceInstanceReport(
                info, em.profile.name, em.emitted, m.released, m.queue.replaced_count,
                m.polls_received, m.empties_sent, m.retransmissions,
            ))
        report = SourceReport(self.config.source_id, self.registered, self.sync_requests, rows, self.decode_errors)
        if self.config.report_out:
            with open(self.config.report_out, "w") as fh:
                fh.write(report.to_json())
        return report


def run_source(config: HarnessConfig) -> SourceReport:
    return SourceClient(config).run()
