"""Experiment description for the discrete-event simulator."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Optional

ACCESS_MODES = ("polling", "random_access")
QUEUES = ("lcfs1", "fcfs")
POLICIES = ("mw", "maf", "rr", "mw-oracle")
TRAFFIC_KINDS = ("poisson", "periodic")


class ConfigError(ValueError):
    def __init__(self, problems: list[str]) -> None:
        super().__init__("invalid configuration: " + "; ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class TrafficSpec:
    """Update generation for one information type, applied to every source.

    ``rate_limit_hz`` thins the stream with a fixed minimum spacing. It is a
    static limiter for "lower generation rate" comparisons, not an adaptive
    age-control protocol.
    """

    kind: str = "poisson"
    rate_hz: float = 5000.0
    size_bytes: int = 150
    info_type: int = 0
    jitter: float = 0.0
    phase_s: float = 0.0
    rate_limit_hz: Optional[float] = None


@dataclass(frozen=True)
class SimConfig:
    n_sources: int = 1
    traffic: tuple[TrafficSpec, ...] = (TrafficSpec(),)
    channel_p: tuple[float, ...] = (1.0,)  # cycled over sources
    access: str = "polling"
    policy: str = "mw"
    queue: str = "lcfs1"
    fcfs_capacity: Optional[int] = 1000
    fcfs_drop: str = "tail"
    horizon_s: float = 10.0
    seed: int = 0
    poll_tx_us: int = 30
    turnaround_us: int = 10
    link_rate_bps: float = 12e6
    timeout_us: int = 100
    window_us: int = 500_000
    mtu_payload: int = 1400
    poll_loss: bool = False
    abandon_after: Optional[int] = None
    ra_attempt_prob: float = 1.0
    ra_cw_min: int = 16
    ra_cw_max: int = 1024

    def p(self, source: int) -> float:
        return self.channel_p[source % len(self.channel_p)]

    @property
    def horizon_us(self) -> int:
        return int(round(self.horizon_s * 1_000_000))

    @property
    def lambda_hz(self) -> float:
        """Total update generation rate of one source."""
        return float(sum(t.rate_hz for t in self.traffic))

    def data_tx_us(self, size_bytes: int) -> int:
        return int(round(size_bytes * 8 / self.link_rate_bps * 1_000_000))

    def problems(self) -> list[str]:
        out = []
        if self.n_sources < 1:
            out.append("n_sources must be >= 1")
        if not self.traffic:
            out.append("traffic needs at least one entry")
        infos = [t.info_type for t in self.traffic]
        if len(set(infos)) != len(infos):
            out.append("traffic info_type values must be distinct")
        for i, t in enumerate(self.traffic):
            if t.kind not in TRAFFIC_KINDS:
                out.append(f"traffic[{i}].kind must be one of {TRAFFIC_KINDS}")
            if not t.rate_hz > 0:
                out.append(f"traffic[{i}].rate_hz must be > 0")
            if t.size_bytes < 1:
                out.append(f"traffic[{i}].size_bytes must be >= 1")
            if not 0 <= t.jitter <= 1:
                out.append(f"traffic[{i}].jitter must be in [0, 1]")
            if t.phase_s < 0:
                out.append(f"traffic[{i}].phase_s must be >= 0")
            if t.rate_limit_hz is not None and not t.rate_limit_hz > 0:
                out.append(f"traffic[{i}].rate_limit_hz must be > 0")
            if not 0 <= t.info_type <= 255:
                out.append(f"traffic[{i}].info_type must fit in a byte")
        if not self.channel_p:
            out.append("channel_p needs at least one value")
        if any(not 0 < p <= 1 for p in self.channel_p):
            out.append("channel_p values must be in (0, 1]")
        if self.access not in ACCESS_MODES:
            out.append(f"access must be one of {ACCESS_MODES}")
        if self.policy not in POLICIES:
            out.append(f"policy must be one of {POLICIES}")
        if self.queue not in QUEUES:
            out.append(f"queue must be one of {QUEUES}")
        if self.fcfs_capacity is not None and self.fcfs_capacity < 1:
            out.append("fcfs_capacity must be >= 1 or unset")
        if self.fcfs_drop not in ("tail", "head"):
            out.append("fcfs_drop must be 'tail' or 'head'")
        if not self.horizon_s > 0:
            out.append("horizon_s must be > 0")
        if self.seed < 0:
            out.append("seed must be >= 0")
        if self.poll_tx_us < 0 or self.turnaround_us < 0:
            out.append("poll_tx_us and turnaround_us must be >= 0")
        if self.poll_tx_us + self.turnaround_us <= 0:
            out.append("poll_tx_us + turnaround_us must be > 0")
        if self.timeout_us <= 0:
            out.append("timeout_us must be > 0")
        if not self.link_rate_bps > 0:
            out.append("link_rate_bps must be > 0")
        if self.window_us <= 0:
            out.append("window_us must be > 0")
        if self.mtu_payload < 1:
            out.append("mtu_payload must be >= 1")
        if not 0 < self.ra_attempt_prob <= 1:
            out.append("ra_attempt_prob must be in (0, 1]")
        if not 1 <= self.ra_cw_min <= self.ra_cw_max:
            out.append("need 1 <= ra_cw_min <= ra_cw_max")
        if (
            self.access == "random_access"
            and self.queue == "lcfs1"
            and any(t.size_bytes > self.mtu_payload for t in self.traffic)
        ):
            out.append("random access with lcfs1 needs single-packet updates")
        return out

    def validate(self) -> "SimConfig":
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["traffic"] = [asdict(t) for t in self.traffic]
        d["channel_p"] = list(self.channel_p)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError([f"unknown key {k!r}" for k in sorted(unknown)])
        d = dict(d)
        if "traffic" in d:
            tknown = {f.name for f in fields(TrafficSpec)}
            specs = []
            for i, t in enumerate(d["traffic"]):
                bad = set(t) - tknown
                if bad:
                    raise ConfigError([f"traffic[{i}]: unknown key {k!r}" for k in sorted(bad)])
                specs.append(TrafficSpec(**t))
            d["traffic"] = tuple(specs)
        if "channel_p" in d:
            d["channel_p"] = tuple(float(p) for p in d["channel_p"])
        return cls(**d)

    def config_hash(self) -> str:
        """Stable digest of everything except the seed."""
        d = self.to_dict()
        d.pop("seed")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)
