"""Synthetic sensors producing self-verifying payloads.

Each payload starts with an 8-byte BLAKE2b digest of the remaining bytes,
so the receiver can detect corruption without a side channel. The digest
fits even the 20-byte IMU sample.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

DIGEST_LEN = 8


@dataclass(frozen=True)
class Profile:
    name: str
    info_type: int
    size_bytes: int
    rate_hz: float


PROFILES = {
    "gps": Profile("gps", 1, 50, 1.0),
    "imu": Profile("imu", 2, 20, 100.0),
    "camera": Profile("camera", 3, 19_000, 2.0),
}


def digest(body: bytes) -> bytes:
    return hashlib.blake2b(body, digest_size=DIGEST_LEN).digest()


def make_payload(body: bytes) -> bytes:
    return digest(body) + body


def payload_ok(payload: bytes) -> bool:
    return len(payload) >= DIGEST_LEN and digest(payload[DIGEST_LEN:]) == payload[:DIGEST_LEN]


class SensorEmulator:
    """Emits ``profile.size_bytes`` payloads every period, shifted by up to
    ``jitter / 2`` of a period either way."""

    def __init__(self, profile: Profile, rng: np.random.Generator, start_us: int, jitter: float = 0.0) -> None:
        if profile.size_bytes <= DIGEST_LEN:
            raise ValueError(f"{profile.name}: payload too small for the digest")
        if not 0 <= jitter < 1:
            raise ValueError("jitter must be in [0, 1)")
        self.profile = profile
        self.rng = rng
        self.jitter = jitter
        self.period_us = 1e6 / profile.rate_hz
        self.start_us = start_us
        self.k = 0
        self.emitted = 0
        self.next_due = self._due(0)

    def _due(self, k: int) -> int:
        shift = self.jitter * (self.rng.random() - 0.5) if self.jitter else 0.0
        return self.start_us + int(round((k + shift) * self.period_us))

    def emit(self) -> bytes:
        """Payload for the emission at ``next_due``; advances the schedule."""
        body = self.rng.bytes(self.profile.size_bytes - DIGEST_LEN)
        self.k += 1
        self.emitted += 1
        self.next_due = max(self._due(self.k), self.next_due)
        return make_payload(body)
