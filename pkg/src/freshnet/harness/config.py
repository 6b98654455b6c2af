"""Settings shared by the destination and source processes."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from typing import Optional

from .sensors import PROFILES


class HarnessConfigError(ValueError):
    def __init__(self, problems: list[str]) -> None:
        super().__init__("invalid harness configuration: " + "; ".join(problems))
        self.problems = problems


def parse_addr(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


@dataclass(frozen=True)
class HarnessConfig:
    role: str = "destination"
    bind: str = "127.0.0.1:0"
    peer: Optional[str] = None
    source_id: int = 0
    profiles: tuple[str, ...] = ("gps",)
    jitter: float = 0.0
    timeout_ms: float = 300.0
    sync_rounds: int = 8
    sync_timeout_ms: float = 200.0
    resync_s: Optional[float] = None
    mtu_payload: int = 1400
    duration_s: float = 60.0
    poll_rate_hz: Optional[float] = None
    metrics_out: Optional[str] = None
    delivery_log: Optional[str] = None
    sent_log: Optional[str] = None
    report_out: Optional[str] = None
    clock_skew_us: int = 0
    register_attempts: int = 10
    register_interval_s: float = 0.5
    seed: int = 0

    def problems(self) -> list[str]:
        out = []
        if self.role not in ("destination", "source"):
            out.append("role must be 'destination' or 'source'")
        try:
            parse_addr(self.bind)
        except ValueError as exc:
            out.append(f"bind: {exc}")
        if self.role == "source":
            if self.peer is None:
                out.append("peer is required for a source")
            else:
                try:
                    parse_addr(self.peer)
                except ValueError as exc:
                    out.append(f"peer: {exc}")
            if not self.profiles:
                out.append("a source needs at least one profile")
            if len(set(self.profiles)) != len(self.profiles):
                out.append("profiles must not repeat")
        for p in self.profiles:
            if p not in PROFILES:
                out.append(f"unknown profile {p!r}; choose from {sorted(PROFILES)}")
        if not 0 <= self.source_id <= 0xFFFF:
            out.append("source_id must fit in 16 bits")
        if not 0 <= self.jitter < 1:
            out.append("jitter must be in [0, 1)")
        if not self.timeout_ms > 0:
            out.append("timeout_ms must be > 0")
        if self.sync_rounds < 1:
            out.append("sync_rounds must be >= 1")
        if not self.sync_timeout_ms > 0:
            out.append("sync_timeout_ms must be > 0")
        if self.resync_s is not None and not self.resync_s > 0:
            out.append("resync_s must be > 0")
        if not 1 <= self.mtu_payload <= 65_000:
            out.append("mtu_payload must be in [1, 65000]")
        if not self.duration_s > 0:
            out.append("duration_s must be > 0")
        if self.poll_rate_hz is not None and not self.poll_rate_hz > 0:
            out.append("poll_rate_hz must be > 0")
        if self.register_attempts < 1:
            out.append("register_attempts must be >= 1")
        if not self.register_interval_s > 0:
            out.append("register_interval_s must be > 0")
        if self.seed < 0:
            out.append("seed must be >= 0")
        return out

    def validate(self) -> "HarnessConfig":
        problems = self.problems()
        if problems:
            raise HarnessConfigError(problems)
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["profiles"] = list(self.profiles)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HarnessConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise HarnessConfigError([f"unknown key {k!r}" for k in sorted(unknown)])
        d = dict(d)
        if "profiles" in d:
            d["profiles"] = tuple(d["profiles"])
        return cls(**d)

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("seed")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]
