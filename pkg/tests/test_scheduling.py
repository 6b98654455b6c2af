import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from freshnet.scheduling import (
    LogEvent,
    MaxAgeFirst,
    MaxWeight,
    Reception,
    RoundRobin,
    SourceEstimate,
    TimeRegressionError,
    hol_on_reception,
    maf_select,
    make_policy,
    mw_index,
    mw_select,
    reliability_estimate,
    reliability_record,
)

S = 1_000_000


def estimate(key, now, age_us, hol_us=0, polls=0, receptions=0, window_us=500_000):
    """Estimate at ``now`` with the given age, HoL and in-window log counts."""
    e = SourceEstimate(key, start=0, window_us=window_us)
    t = max(now - window_us + 1, 0)
    for _ in range(polls):
        e.record(LogEvent.POLL_SENT, t)
    for _ in range(receptions):
        e.record(LogEvent.DATA_RECEIVED, t)
    e.fresh_timestamp = now - age_us
    e.hol_us = hol_us
    return e


def test_mw_index_examples():
    assert mw_index(1.0, 5, 2) == 9
    assert mw_index(0.5, 4, 4) == 0
    assert mw_index(0.3, 20, 0) == pytest.approx(120)
    assert mw_index(0.9, 10, 0) == pytest.approx(90)
    assert mw_index(0.3, 20, 0) > mw_index(0.9, 10, 0)


def test_mw_index_negative_gap_clamps_and_counts():
    assert mw_index(1.0, 1, 2) == 0.0
    e = estimate((0, 0), 10 * S, age_us=1 * S, hol_us=2 * S)
    assert e.index(10 * S) == 0.0
    assert e.inconsistencies == 1


def test_mw_select_ties_go_to_least_key():
    now = 10 * S
    ests = [estimate(k, now, 3 * S) for k in [(2, 0), (0, 1), (1, 0), (0, 2)]]
    assert mw_select(ests, now).chosen == (0, 1)


def test_mw_select_embedded_example():
    now = 100 * S
    # p = (D+1)/(P+1): 0.3 needs e.g. P=9, D=2; 0.9 needs P=9, D=8
    low = estimate((0, 0), now, 20 * S, polls=9, receptions=2)
    high = estimate((1, 0), now, 10 * S, polls=9, receptions=8)
    assert low.reliability(now) == pytest.approx(0.3)
    assert high.reliability(now) == pytest.approx(0.9)
    d = mw_select([low, high], now)
    assert d.chosen == (0, 0)
    assert d.index_values[(0, 0)] == pytest.approx(120)


def test_mw_select_empty_raises():
    with pytest.raises(ValueError):
        mw_select([], 0)
    with pytest.raises(ValueError):
        maf_select([], 0)


def _oracle_choice(states, now, window_us):
    """Brute force: recount the log, rebuild every index, take the least maximizer."""
    best = None
    choice = None
    for key, (log, fresh, hol) in sorted(states.items()):
        recent = [kind for t, kind in log if t >= now - window_us]
        polls = sum(1 for k in recent if k == "poll")
        rx = len(recent) - polls
        p = min(1.0, (rx + 1) / (polls + 1))
        gap = max(0, (now - fresh) - hol) / S
        value = p * gap * gap
        if best is None or value > best:
            best, choice = value, key
    return choice


@pytest.mark.parametrize("seed", range(200))
def test_mw_select_matches_exhaustive_argmax(seed):
    rng = random.Random(seed)
    now = 5 * S
    window = 500_000
    ests, states = [], {}
    for sid in range(5):
        key = (sid, rng.randrange(2))
        e = SourceEstimate(key, start=0, window_us=window)
        log = []
        t = 0
        for _ in range(rng.randrange(30)):
            t = min(now, t + rng.randrange(400_000))
            kind = rng.choice(["poll", "poll", "data", "empty"])
            e.record({"poll": LogEvent.POLL_SENT, "data": LogEvent.DATA_RECEIVED,
                      "empty": LogEvent.EMPTY_RECEIVED}[kind], t)
            log.append((t, kind))
        e.fresh_timestamp = now - rng.choice([0, 1, 2, 3]) * S // 4
        e.hol_us = rng.choice([0, S // 8, S // 4])
        ests.append(e)
        states[key] = (log, e.fresh_timestamp, e.hol_us)
    assert mw_select(ests, now).chosen == _oracle_choice(states, now, window)


def test_maf_examples():
    now = 10 * S
    ests = [estimate((i, 0), now, a * S) for i, a in enumerate((3, 7, 5))]
    assert maf_select(ests, now).chosen == (1, 0)
    ests = [estimate((i, 0), now, a * S) for i, a in enumerate((7, 3, 7))]
    assert maf_select(ests, now).chosen == (0, 0)
    # p = 0.01 with P=99, D=0; MAF still picks it
    weak = estimate((0, 0), now, 10 * S, polls=99)
    strong = estimate((1, 0), now, 9 * S)
    assert weak.reliability(now) == pytest.approx(0.01)
    assert maf_select([weak, strong], now).chosen == (0, 0)
    assert mw_select([weak, strong], now).chosen == (1, 0)


def test_reliability_record_examples():
    e = SourceEstimate((0, 0), window_us=500_000)
    for t in (0, 10, 20):
        reliability_record(e, LogEvent.POLL_SENT, t)
    reliability_record(e, LogEvent.DATA_RECEIVED, 30)
    assert e.counts(30) == (3, 1)
    e = SourceEstimate((0, 0), window_us=500_000)
    e.record(LogEvent.POLL_SENT, 100_000)
    assert e.counts(700_000) == (0, 0)
    e = SourceEstimate((0, 0))
    e.record(LogEvent.POLL_SENT, 0)
    e.record(LogEvent.EMPTY_RECEIVED, 5)
    assert e.counts(5) == (1, 1)


def test_window_edge_is_inclusive():
    e = SourceEstimate((0, 0), window_us=500_000)
    e.record(LogEvent.POLL_SENT, 200_000)
    assert e.counts(700_000) == (1, 0)
    assert e.counts(700_001) == (0, 0)


def test_record_time_regression_raises():
    e = SourceEstimate((0, 0))
    e.record(LogEvent.POLL_SENT, 10)
    with pytest.raises(TimeRegressionError):
        e.record(LogEvent.POLL_SENT, 9)


def test_reliability_estimate_examples():
    e = SourceEstimate((0, 0))
    assert reliability_estimate(e, 0) == 1.0
    e = estimate((0, 0), S, 0, polls=9, receptions=4)
    assert reliability_estimate(e, S) == 0.5


def test_reliability_capped_at_one():
    e = SourceEstimate((0, 0))
    e.record(LogEvent.DATA_RECEIVED, 0)
    e.record(LogEvent.DATA_RECEIVED, 1)
    assert e.reliability(1) == 1.0


@given(st.integers(1, 500), st.data())
def test_reliability_is_optimistic(polls, data):
    rx = data.draw(st.integers(0, polls))
    e = estimate((0, 0), S, 0, polls=polls, receptions=rx)
    p = e.reliability(S)
    assert p >= rx / polls
    assert 0 < p <= 1


def _bernoulli_trial(p, rate_hz, seed, seconds=2.0, window_us=500_000):
    """Poll at ``rate_hz``; each poll is answered at the same instant w.p. ``p``."""
    rng = np.random.default_rng(seed)
    e = SourceEstimate((0, 0), window_us=window_us)
    step = int(S / rate_hz)
    n = int(seconds * S) // step + 1
    answered = rng.random(n) < p
    for k in range(n):
        e.record(LogEvent.POLL_SENT, k * step)
        if answered[k]:
            e.record(LogEvent.DATA_RECEIVED, k * step)
    return e.reliability((n - 1) * step)


def _exact_pass_probability(p, polls, tol=0.05):
    total = 0.0
    for d in range(polls + 1):
        est = min(1.0, (d + 1) / (polls + 1))
        if abs(est - p) <= tol + 1e-12:
            total += math.comb(polls, d) * p**d * (1 - p) ** (polls - d)
    return total


@pytest.mark.parametrize("p", [0.3, 0.7, 0.95])
def test_bernoulli_pass_rate_at_200_polls_per_second(p):
    """At 200 polls/s the 0.5 s window holds 101 polls; the share of runs
    landing within 0.05 matches the exact binomial probability."""
    trials = 400
    hits = sum(abs(_bernoulli_trial(p, 200, seed) - p) <= 0.05 for seed in range(trials))
    expect = _exact_pass_probability(p, 101)
    sd = math.sqrt(expect * (1 - expect) / trials)
    assert abs(hits / trials - expect) <= 4 * sd


def test_hol_golden_trace():
    e = SourceEstimate((0, 0), start=0)
    now = 10 * S
    hol_on_reception(e, Reception.DATA, now - 1 * S, now)
    assert (e.age(now), e.hol()) == (1.0, 1.0)
    assert e.index(now) == 0.0
    # nothing received for 2 s: H stays, age grows
    later = now + 2 * S
    assert (e.age(later), e.hol()) == (3.0, 1.0)
    assert e.index(later) == pytest.approx(e.reliability(later) * 4.0)
    # empty at age 4 s
    t = now + 3 * S
    hol_on_reception(e, Reception.EMPTY, None, t)
    assert (e.age(t), e.hol()) == (4.0, 4.0)
    assert e.index(t) == 0.0
    assert e.index(t + 500_000) > 0.0


def test_hol_stale_data_does_not_lower_age():
    e = SourceEstimate((0, 0))
    e.on_reception(Reception.DATA, 5 * S, 4 * S)
    e.on_reception(Reception.DATA, 6 * S, 3 * S)
    assert e.age(6 * S) == 2.0
    assert e.hol() == 2.0


def test_hol_partial_fragment():
    e = SourceEstimate((0, 0))
    e.on_reception(Reception.DATA, 5 * S, 4 * S)  # age 1 s at 5 s
    e.on_reception(Reception.PARTIAL, 7 * S, 6 * S)  # fragment of an update from 6 s
    assert e.age(7 * S) == 3.0  # age unchanged until the update completes
    assert e.hol() == 1.0


@given(st.lists(st.tuples(st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 20)),
                min_size=1, max_size=6), st.integers(1, 6))
def test_scale_covariance(states, k):
    c = 2**k
    now = 10**8
    base = [estimate((i, 0), now, a + h, h, polls=9, receptions=r % 10) for i, (a, h, r) in enumerate(states)]
    scaled = [estimate((i, 0), now, c * (a + h), c * h, polls=9, receptions=r % 10)
              for i, (a, h, r) in enumerate(states)]
    assert mw_select(base, now).chosen == mw_select(scaled, now).chosen


@given(st.lists(st.tuples(st.integers(0, 10**6), st.integers(0, 10**6)), min_size=2, max_size=6), st.data())
def test_just_emptied_instance_is_not_repolled(states, data):
    now = 10**7
    ests = [estimate((i, 0), now, a + h, h) for i, (a, h) in enumerate(states)]
    i = data.draw(st.integers(0, len(ests) - 1))
    ests[i].on_reception(Reception.EMPTY, now)
    assert ests[i].index(now) == 0.0
    others = [e.index(now) for j, e in enumerate(ests) if j != i]
    if max(others) > 0:
        assert mw_select(ests, now).chosen != (i, 0)


def test_identical_states_give_identical_decisions():
    now = 3 * S
    make = lambda: [estimate((i, 0), now, (i % 3) * S, polls=i, receptions=i // 2) for i in range(6)]
    assert mw_select(make(), now) == mw_select(make(), now)


def test_round_robin_cycles():
    rr = RoundRobin()
    ests = [estimate(k, S, 0) for k in [(1, 0), (0, 0), (2, 0)]]
    assert [rr.select(ests, S).chosen for _ in range(4)] == [(0, 0), (1, 0), (2, 0), (0, 0)]


def test_policy_factory():
    assert isinstance(make_policy("mw"), MaxWeight)
    assert isinstance(make_policy("maf"), MaxAgeFirst)
    assert make_policy("mw-oracle", truth=lambda k, t: (1.0, 0.0, 0.0)).name == "mw-oracle"
    with pytest.raises(ValueError):
        make_policy("mw-oracle")
    with pytest.raises(ValueError):
        make_policy("edf")
