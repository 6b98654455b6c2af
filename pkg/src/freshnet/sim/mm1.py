"""M/M/1 age of information: closed forms and two independent simulators.

``mm1_age_oracle`` gives the time-average age for an M/M/1 queue served
FCFS, and for the LCFS variant that keeps one waiting update and replaces
it on every arrival (M/M/1/2*, age-equivalent to LCFS). The LCFS expression
was obtained by solving the stochastic-hybrid-system balance equations over
the three states idle / in service / in service plus one waiting.

``simulate_fast`` computes sample paths with array recursions and is what
sweeps use. ``simulate_events`` is a brute-force event-by-event run built
from the queue and tracker classes; it exists to validate the other two.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from ..aoi import AgeTracker
from ..queues import FcfsQueue, Lcfs1Queue, Update
from .events import EventQueue

FCFS = "fcfs"
LCFS = "lcfs"


class InstabilityError(ValueError):
    pass


def mm1_age_oracle(lam: float, mu: float, discipline: str) -> float:
    if not (lam > 0 and mu > 0):
        raise ValueError("rates must be positive")
    rho = lam / mu
    if discipline == FCFS:
        if rho >= 1:
            raise InstabilityError(f"FCFS M/M/1 is unstable at rho={rho}")
        return (1 + 1 / rho + rho * rho / (1 - rho)) / mu
    if discipline == LCFS:
        r = rho
        num = 2 * r**5 + 7 * r**4 + 8 * r**3 + 7 * r**2 + 4 * r + 1
        den = r * (r + 1) ** 2 * (r * r + r + 1)
        return num / den / mu
    raise ValueError(f"unknown discipline {discipline!r}")


@dataclass(frozen=True)
class Mm1Result:
    average_age: float
    deliveries: int
    horizon: float


def _sawtooth_average(gen: np.ndarray, dep: np.ndarray) -> Mm1Result:
    """Time-average age from time 0 (age 0) to the last departure."""
    first = dep[0] * dep[0] / 2  # virtual delivery at t=0
    d0, d1 = dep[:-1], dep[1:]
    a = gen[:-1]
    area = first + np.sum(((d0 - a) + (d1 - a)) * (d1 - d0)) / 2
    return Mm1Result(float(area / dep[-1]), len(dep), float(dep[-1]))


def _fcfs_path(arr_rng, svc_rng, lam: float, mu: float, n: int):
    arr = np.cumsum(arr_rng.exponential(1 / lam, n))
    svc = svc_rng.exponential(1 / mu, n)
    c = np.cumsum(svc)
    c_prev = np.concatenate(([0.0], c[:-1]))
    dep = c + np.maximum.accumulate(arr - c_prev)
    return arr, dep


def _lcfs_path(arr_rng, svc_rng, lam: float, mu: float, n: int):
    svc = svc_rng.exponential(1 / mu, n).tolist()
    arr_chunk = max(int(n * (1 + lam / mu)) + 1000, 1000)
    arr = np.cumsum(arr_rng.exponential(1 / lam, arr_chunk)).tolist()
    gen = [0.0] * n
    dep = [0.0] * n
    served = 0
    start = arr[0]
    right = bisect.bisect_right
    for k in range(n):
        d = start + svc[k]
        gen[k] = arr[served]
        dep[k] = d
        while arr[-1] <= d:
            extra = np.cumsum(arr_rng.exponential(1 / lam, arr_chunk)) + arr[-1]
            arr.extend(extra.tolist())
        j = right(arr, d) - 1
        if j > served:
            served = j
            start = d
        else:
            served += 1
            start = arr[served]
    return np.asarray(gen), np.asarray(dep)


def simulate_fast(lam: float, mu: float, discipline: str, n_deliveries: int, seed: int = 0) -> Mm1Result:
    """Sample-path time-average age over ``n_deliveries`` departures.

    Arrivals and service times come from separate streams of ``seed``, and
    the k-th service started gets the k-th service time, so runs that share
    a seed are paired across disciplines and loads.
    """
    if n_deliveries < 2:
        raise ValueError("need at least two deliveries")
    arr_rng = np.random.default_rng([seed, 0])
    svc_rng = np.random.default_rng([seed, 1])
    if discipline == FCFS:
        if lam >= mu:
            raise InstabilityError("FCFS M/M/1 is unstable for lam >= mu")
        gen, dep = _fcfs_path(arr_rng, svc_rng, lam, mu, n_deliveries)
    elif discipline == LCFS:
        gen, dep = _lcfs_path(arr_rng, svc_rng, lam, mu, n_deliveries)
    else:
        raise ValueError(f"unknown discipline {discipline!r}")
    return _sawtooth_average(gen, dep)


def simulate_events(
    lam: float, mu: float, discipline: str, n_deliveries: int, seed: int = 0, unit_us: int = 1_000_000
) -> Mm1Result:
    """Event-by-event M/M/1 run in integer microseconds (1/mu = ``unit_us``).

    Uses ``FcfsQueue`` (unbounded) or ``Lcfs1Queue`` as the waiting room and
    an ``AgeTracker`` at the monitor. Slow; meant for validation.
    """
    rng = np.random.default_rng(seed)
    arr_rng = np.random.default_rng([seed, 1])
    waiting = FcfsQueue() if discipline == FCFS else Lcfs1Queue()
    if discipline not in (FCFS, LCFS):
        raise ValueError(f"unknown discipline {discipline!r}")
    tracker = AgeTracker(start=0, skew_bound_us=0)
    scale_a = unit_us * mu / lam
    chunk = 65536
    svc_buf: list[float] = []
    arr_buf: list[float] = []

    def service() -> int:
        nonlocal svc_buf
        if not svc_buf:
            svc_buf = rng.exponential(unit_us, chunk).tolist()
        return max(1, int(round(svc_buf.pop())))

    def gap() -> int:
        nonlocal arr_buf
        if not arr_buf:
            arr_buf = arr_rng.exponential(scale_a, chunk).tolist()
        return int(round(arr_buf.pop()))

    ARRIVAL, DEPARTURE = 0, 1
    eq = EventQueue()
    eq.push(gap(), ARRIVAL, priority=1)
    in_service: Update | None = None
    delivered = 0
    now = 0
    while delivered < n_deliveries:
        now, kind = eq.pop()
        if kind == ARRIVAL:
            u = Update(now)
            if in_service is None:
                in_service = u
                eq.push(now + service(), DEPARTURE, priority=0)
            else:
                waiting.push(u)
            eq.push(now + gap(), ARRIVAL, priority=1)
        else:
            tracker.observe_delivery(in_service.gen_timestamp, now)
            delivered += 1
            in_service = waiting.pop()
            if in_service is not None:
                eq.push(now + service(), DEPARTURE, priority=0)
    avg_units = tracker.time_average_age(now) * 1_000_000 / unit_us
    return Mm1Result(avg_units / mu, delivered, now / unit_us / mu)


def rho_grid(lo: float = 0.1, hi: float = 0.9, step: float = 0.05) -> list[float]:
    n = int(round((hi - lo) / step))
    return [round(lo + i * step, 10) for i in range(n + 1)]
