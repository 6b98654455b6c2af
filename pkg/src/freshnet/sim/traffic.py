"""Seeded arrival streams and channel draws.

Every stochastic entity gets its own generator derived from the master seed
and a fixed path, so changing one source or one axis leaves the others'
draws untouched.
"""
from __future__ import annotations

import bisect

import numpy as np

from .config import TrafficSpec

TRAFFIC_STREAM = 1
CHANNEL_STREAM = 2
MAC_STREAM = 3
CHUNK = 4096


def stream_rng(seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(path)))


class ArrivalStream:
    """Integer-microsecond generation times for one traffic spec."""

    def __init__(self, spec: TrafficSpec, rng: np.random.Generator, chunk: int = CHUNK) -> None:
        self.spec = spec
        self.rng = rng
        self.chunk = chunk
        self.period_us = 1e6 / spec.rate_hz
        self._k = 0  # periodic index
        self._clock = spec.phase_s * 1e6  # running float time for poisson
        self._last_admitted = None
        self._min_gap = None if spec.rate_limit_hz is None else 1e6 / spec.rate_limit_hz
        self.buf: list[int] = []
        self.pos = 0
        self.generated = 0
        self.limited = 0

    def _raw_chunk(self) -> list[int]:
        n = self.chunk
        if self.spec.kind == "poisson":
            t = self._clock + np.cumsum(self.rng.exponential(self.period_us, n))
            self._clock = float(t[-1])
        else:
            k = np.arange(self._k, self._k + n)
            self._k += n
            t = self.spec.phase_s * 1e6 + k * self.period_us
            if self.spec.jitter:
                t = t + self.spec.jitter * self.period_us * (self.rng.random(n) - 0.5)
                t = np.maximum(t, 0.0)
        return np.floor(t).astype(np.int64).tolist()

    def _limit(self, t: list[int]) -> list[int]:
        keep = []
        last = self._last_admitted
        gap = self._min_gap
        for x in t:
            if last is None or x - last >= gap:
                keep.append(x)
                last = x
        self.limited += len(t) - len(keep)
        self._last_admitted = last
        return keep

    def _extend(self) -> None:
        new = self._raw_chunk()
        if self._min_gap is not None:
            new = self._limit(new)
        self.buf = self.buf[self.pos:] + new
        self.pos = 0

    def peek(self) -> int:
        while self.pos >= len(self.buf):
            self._extend()
        return self.buf[self.pos]

    def take_until(self, t_us: int) -> list[int]:
        """Arrivals with time <= ``t_us`` not yet handed out, in order."""
        while len(self.buf) == self.pos or self.buf[-1] <= t_us:
            self._extend()
        j = bisect.bisect_right(self.buf, t_us, self.pos)
        out = self.buf[self.pos:j]
        self.pos = j
        self.generated += len(out)
        return out


class UniformStream:
    """Chunked U[0,1) draws; cheaper than one generator call per draw."""

    def __init__(self, rng: np.random.Generator, chunk: int = CHUNK) -> None:
        self.rng = rng
        self.chunk = chunk
        self._buf: list[float] = []
        self._i = 0

    def next(self) -> float:
        if self._i >= len(self._buf):
            self._buf = self.rng.random(self.chunk).tolist()
            self._i = 0
        u = self._buf[self._i]
        self._i += 1
        return u


class Channel:
    """Bernoulli(p) success per transmission."""

    def __init__(self, p: float, rng: np.random.Generator) -> None:
        self.p = p
        self._u = UniformStream(rng)

    def success(self) -> bool:
        if self.p >= 1.0:
            return True
        return self._u.next() < self.p
