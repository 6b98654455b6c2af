"""Acceptance gate: one test per criterion, each recording a summary line."""
import csv
import json
import math
import random
import subprocess
import sys
import time

import numpy as np
import pytest

from freshnet import analyze as an
from freshnet.harness.sensors import PROFILES
from freshnet.protocol import decode, encode, fragment, reassemble, sync_offset
from freshnet.protocol.machines import SendPoll
from freshnet.queues import Lcfs1Queue, Update
from freshnet.scheduling import LogEvent, Reception, SourceEstimate
from freshnet.sim import N_GRID, SimConfig, sweep
from freshnet.sim.mm1 import rho_grid

from helpers import ACCEPTANCE, NewestFirstStack, age_path, closed_loop_trace, random_valid_packet, serve

S = 1_000_000


def record(n, ok, detail):
    ACCEPTANCE[n] = detail
    print(f"criterion {n} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


# -- 1, 2: M/M/1 ---------------------------------------------------------------

@pytest.fixture(scope="module")
def mm1_rows():
    return an.mm1_table(rho_grid(), 1_000_000, seed=0)


def test_criterion_01_fcfs_matches_oracle(mm1_rows):
    errs = [abs(r["fcfs_sim"] / r["fcfs_oracle"] - 1) for r in mm1_rows]
    best = an.mm1_minimizer(mm1_rows, "fcfs_sim")
    ok = len(mm1_rows) == 17 and max(errs) <= 0.02 and 0.45 <= best <= 0.60
    record(1, ok, f"max rel err {max(errs):.4f} over {len(mm1_rows)} loads, minimizer rho={best}")


def test_criterion_02_lcfs_dominates(mm1_rows):
    below = sum(r["lcfs_sim"] <= r["fcfs_sim"] for r in mm1_rows)
    lcfs = [r["lcfs_sim"] for r in mm1_rows]
    inversions = sum(b > a for a, b in zip(lcfs, lcfs[1:]))
    ok = below == len(mm1_rows) and inversions <= 0.01 * (len(lcfs) - 1)
    record(2, ok, f"LCFS <= FCFS at {below}/{len(mm1_rows)} loads, {inversions} increases along rho")


# -- 3: head-drop equivalence ---------------------------------------------------------

def test_criterion_03_head_drop_equivalence():
    rng = np.random.default_rng(3)
    identical = 0
    for _ in range(1000):
        lam, mu = rng.uniform(0.1, 5), rng.uniform(0.1, 5)
        arrivals = np.cumsum(rng.exponential(1e6 / lam, 200)).astype(np.int64).tolist()
        opportunities = np.cumsum(rng.exponential(1e6 / mu, 200)).astype(np.int64).tolist()
        a = age_path(serve(Lcfs1Queue(), arrivals, opportunities))
        b = age_path(serve(NewestFirstStack(), arrivals, opportunities))
        identical += a == b
    record(3, identical == 1000, f"{identical}/1000 traces with identical age paths")


# -- 4, 5: N sweeps ---------------------------------------------------------------------

SEEDS = 10
RA_HORIZON_S = 20.0
POLL_HORIZON_S = 1.0


@pytest.fixture(scope="module")
def n_sweeps():
    t0 = time.monotonic()
    ra, po = [], []
    for r in range(SEEDS):
        seed = 1000 * r
        ra_base = SimConfig(access="random_access", queue="fcfs", fcfs_capacity=1000,
                            horizon_s=RA_HORIZON_S, seed=seed)
        po_base = SimConfig(horizon_s=POLL_HORIZON_S, seed=seed)
        ra.append([log.naoi_s for log in sweep(ra_base, "n", N_GRID).logs])
        po.append([log.naoi_s for log in sweep(po_base, "n", N_GRID).logs])
    return np.array(ra), np.array(po), time.monotonic() - t0


def test_criterion_04_congestion_collapse(n_sweeps):
    ra, po, seconds = n_sweeps
    assert ra.shape == po.shape == (SEEDS, len(N_GRID))
    ratio = ra / po
    mean_ratio = ratio.mean(axis=0)
    i20 = N_GRID.index(20)
    tail = [i for i, n in enumerate(N_GRID) if n >= 10]
    increasing = all(mean_ratio[b] > mean_ratio[a] for a, b in zip(tail, tail[1:]))
    every_seed = int((ratio[:, i20] >= 10).sum())
    per_seed_monotone = int(sum(all(row[b] > row[a] for a, b in zip(tail, tail[1:])) for row in ratio))
    ok = every_seed == SEEDS and increasing
    record(4, ok, f"ratio at N=20 >= 10 in {every_seed}/{SEEDS} seeds (min {ratio[:, i20].min():.0f}); "
                  f"mean ratio N>=10: {np.round(mean_ratio[tail]).astype(int).tolist()}; "
                  f"{per_seed_monotone}/{SEEDS} seeds monotone on their own; {seconds:.0f} s")


def test_criterion_05_linear_scaling(n_sweeps):
    _, po, _ = n_sweeps
    mean = po.mean(axis=0)
    fit = an.linear_fit(N_GRID, mean)
    r = mean[N_GRID.index(24)] / mean[N_GRID.index(12)]
    ok = fit.r2 >= 0.98 and 1.7 <= r <= 2.3
    record(5, ok, f"R^2 {fit.r2:.5f}, slope {fit.slope * 1e6:.1f} us/source, NAoI(24)/NAoI(12) {r:.3f}")


# -- 6: MW vs MAF ----------------------------------------------------------------------------

def test_criterion_06_mw_beats_maf():
    from freshnet.sim import run

    wins, margins = 0, []
    for seed in range(20):
        base = SimConfig(n_sources=10, channel_p=(0.9, 0.3), horizon_s=1.0, seed=seed)
        mw, maf = run(base).naoi_s, run(base.with_(policy="maf")).naoi_s
        wins += mw <= maf
        margins.append(maf / mw)
    record(6, wins >= 19, f"MW <= MAF in {wins}/20 seeds, MAF/MW from {min(margins):.3f} to {max(margins):.3f}")


# -- 7: estimators ------------------------------------------------------------------------------

def _bernoulli_estimate(p, rate_hz, seed):
    rng = np.random.default_rng(seed)
    e = SourceEstimate((0, 0))
    step = S // rate_hz
    n = 2 * S // step + 1
    answered = rng.random(n) < p
    for k in range(n):
        e.record(LogEvent.POLL_SENT, k * step)
        if answered[k]:
            e.record(LogEvent.DATA_RECEIVED, k * step)
    return e.reliability((n - 1) * step)


def test_criterion_07_estimators():
    checks = []
    e = SourceEstimate((0, 0))
    checks.append(e.reliability(0) == 1.0)
    for t in (0, 10, 20):
        e.record(LogEvent.POLL_SENT, t)
    e.record(LogEvent.DATA_RECEIVED, 30)
    checks.append(e.counts(30) == (3, 1) and e.reliability(30) == 0.5)
    e.record(LogEvent.EMPTY_RECEIVED, 40)
    checks.append(e.counts(40) == (3, 2))
    checks.append(e.counts(600_000) == (0, 0))
    # Bernoulli convergence: 2000 polls/s, 10 seeds per p
    worst = 0.0
    for p in (0.3, 0.7, 0.95):
        for seed in range(10):
            worst = max(worst, abs(_bernoulli_estimate(p, 2000, seed) - p))
    checks.append(worst <= 0.05)
    # head-of-line golden trace
    h = SourceEstimate((0, 0))
    h.on_reception(Reception.DATA, 10 * S, 9 * S)
    trace = [(h.age(10 * S), h.hol(), h.index(10 * S))]
    trace.append((h.age(12 * S), h.hol(), round(h.index(12 * S), 12)))
    h.on_reception(Reception.PARTIAL, 12 * S, 11 * S)
    trace.append((h.age(12 * S), h.hol(), None))
    h.on_reception(Reception.EMPTY, 13 * S)
    trace.append((h.age(13 * S), h.hol(), h.index(13 * S)))
    checks.append(trace == [(1.0, 1.0, 0.0), (3.0, 1.0, 4.0), (3.0, 1.0, None), (4.0, 4.0, 0.0)])
    record(7, all(checks), f"{sum(checks)}/{len(checks)} checks; worst |p_hat - p| at 2000 polls/s: {worst:.4f}")


# -- 8: protocol ------------------------------------------------------------------------------

def test_criterion_08_protocol():
    rng = random.Random(8)
    round_trips = sum(decode(encode(p)) == p for p in (random_valid_packet(rng) for _ in range(100_000)))
    blob = rng.randbytes(65536)
    sizes_ok = sum(reassemble(fragment(Update(s, blob[:s], 1), 1400)) == Update(s, blob[:s], 1)
                   for s in range(1, 65537))
    camera = fragment(Update(0, bytes(19000), 3), 1400)
    violations = 0
    events = 0
    for stray in (0.0, 0.1):
        _, trace = closed_loop_trace(100_000, seed=8, unsolicited_rate=stray)
        events += len(trace)
        last = None
        for ev, actions, solicited in trace:
            polls = [a for a in actions if isinstance(a, SendPoll)]
            if len(polls) != (1 if solicited else 0):
                violations += 1
            if solicited and ev is not None:
                key = getattr(getattr(ev, "packet", None), "key", None)
                if key is not None and key != last.packet.key:
                    violations += 1
            if polls:
                last = polls[0]
    ok = (round_trips == 100_000 and sizes_ok == 65536 and len(camera) == 14
          and len(camera[-1].payload) == 800 and violations == 0)
    record(8, ok, f"{round_trips} wire round trips, {sizes_ok} fragment sizes, camera {len(camera)} fragments, "
                  f"{events} trace events with {violations} poll violations")


# -- 9: sync --------------------------------------------------------------------------------------

def test_criterion_09_sync():
    worst_sym = 0.0
    exact = 0
    total = 0
    for theta in (0, 5_000_000, -1_234_567, 999):
        for d1 in range(0, 101):
            for d2 in range(0, 101):
                t1 = 10_000_000
                t2 = t1 + d1 * 1000 + theta
                t3 = t2 + 37
                t4 = t3 - theta + d2 * 1000
                s = sync_offset(t1, t2, t3, t4)
                total += 1
                exact += (s.offset - theta) == (d1 - d2) * 1000 / 2
                if d1 == d2:
                    worst_sym = max(worst_sym, abs(s.offset - theta))
    ok = exact == total and worst_sym <= 1
    record(9, ok, f"asymmetry error exact in {exact}/{total} exchanges, symmetric worst {worst_sym} us")


# -- 10: loopback end to end ------------------------------------------------------------------------

def test_criterion_10_loopback(tmp_path):
    py = [sys.executable, "-m", "freshnet"]
    dest = subprocess.Popen(
        py + ["serve-destination", "--bind", "127.0.0.1:0", "--duration", "62",
              "--delivery-log", str(tmp_path / "deliveries.csv"), "--report", str(tmp_path / "dest.json")],
        stdout=subprocess.PIPE, text=True,
    )
    sources = []
    try:
        peer = dest.stdout.readline().split()[1]
        for sid in (1, 2, 3):
            sources.append(subprocess.Popen(
                py + ["serve-source", "--peer", peer, "--source-id", str(sid), "--profile", "gps,imu,camera",
                      "--duration", "60", "--seed", str(sid), "--sent-log", str(tmp_path / f"sent{sid}.csv")],
                stdout=subprocess.PIPE, text=True,
            ))
        codes = [s.wait(timeout=90) for s in sources]
        dest.communicate(timeout=90)
    finally:
        for proc in sources + [dest]:
            proc.kill()
    report = json.loads((tmp_path / "dest.json").read_text())
    sent = set()
    for sid in (1, 2, 3):
        with open(tmp_path / f"sent{sid}.csv") as fh:
            sent |= {(sid, int(r["info_type"]), r["digest"]) for r in csv.DictReader(fh)}
    with open(tmp_path / "deliveries.csv") as fh:
        rows = [r for r in csv.DictReader(fh) if r["event"] == "deliver"]
    unmatched = sum((int(r["source_id"]), int(r["info_type"]), r["digest"]) not in sent for r in rows)
    bad = sum(r["ok"] != "1" for r in rows) + report["corrupt"]
    polls = {(i["source_id"], i["info_type"]): i["polls"] for i in report["instances"]}
    expected = {(s, p.info_type) for s in (1, 2, 3) for p in PROFILES.values()}
    naoi = report["metrics"]["naoi_s"]
    cameras = sum(int(r["info_type"]) == 3 for r in rows)
    ok = (codes == [0, 0, 0] and dest.returncode == 0 and set(polls) == expected
          and min(polls.values()) >= 10 and bad == 0 and unmatched == 0 and cameras > 0
          and math.isfinite(naoi) and naoi < 2.0)
    record(10, ok, f"{len(rows)} deliveries ({cameras} images), {bad} corrupt, {unmatched} unmatched digests, "
                   f"NAoI {naoi:.4f} s, polls per instance {min(polls.values())}..{max(polls.values())} "
                   f"over {len(polls)} instances")
