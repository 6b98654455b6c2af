"""Summaries over metrics CSVs: seed statistics, ratios and fits."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from statistics import mean, stdev
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np

from .sim.metrics import read_csv

SUMMARY_COLUMNS = (
    "config_hash", "policy", "access", "queue", "n_sources", "lambda_hz", "runs",
    "naoi_mean_s", "naoi_std_s", "throughput_mean_bps",
)


@dataclass(frozen=True)
class Summary:
    config_hash: str
    policy: str
    access: str
    queue: str
    n_sources: int
    lambda_hz: float
    runs: int
    naoi_mean_s: float
    naoi_std_s: float
    throughput_mean_bps: float

    @property
    def arch(self) -> tuple[str, str, str]:
        return (self.access, self.queue, self.policy)

    def row(self) -> dict:
        return {c: getattr(self, c) for c in SUMMARY_COLUMNS}


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r2: float
    points: int


def load_rows(paths: Iterable[str | Path]) -> list[dict]:
    rows = []
    for p in paths:
        rows.extend(read_csv(p))
    return rows


def summarize(rows: Sequence[dict]) -> list[Summary]:
    """NAoI mean and sample standard deviation per configuration."""
    groups: dict[str, list[dict]] = defaultdict(list)
    for r in rows:
        groups[r["config_hash"]].append(r)
    out = []
    for h, rs in groups.items():
        vals = [r["naoi_s"] for r in rs]
        first = rs[0]
        out.append(Summary(
            h, first["policy"], first["access"], first["queue"], first["n_sources"], first["lambda_hz"],
            len(rs), mean(vals), stdev(vals) if len(vals) > 1 else 0.0,
            mean(r["throughput_bps"] for r in rs),
        ))
    out.sort(key=lambda s: (s.arch, s.n_sources, s.lambda_hz, s.config_hash))
    return out


def ratio_table(summaries: Sequence[Summary], baseline: tuple[str, str, str]) -> list[dict]:
    """Baseline NAoI over each other architecture's NAoI at matching (N, lambda)."""
    by_point: dict[tuple, dict[tuple, Summary]] = defaultdict(dict)
    for s in summaries:
        by_point[(s.n_sources, s.lambda_hz)][s.arch] = s
    out = []
    for (n, lam), archs in sorted(by_point.items()):
        base = archs.get(baseline)
        if base is None:
            continue
        for arch, s in sorted(archs.items()):
            if arch == baseline:
                continue
            out.append({
                "n_sources": n,
                "lambda_hz": lam,
                "baseline": "/".join(baseline),
                "other": "/".join(arch),
                "improvement": base.naoi_mean_s / s.naoi_mean_s if s.naoi_mean_s > 0 else math.inf,
            })
    return out


def linear_fit(x: Sequence[float], y: Sequence[float]) -> LinearFit:
    """Least squares ``y = slope * x + intercept`` with its R^2."""
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if len(xa) < 2:
        raise ValueError("a fit needs at least two points")
    slope, intercept = np.polyfit(xa, ya, 1)
    resid = ya - (slope * xa + intercept)
    ss_tot = float(((ya - ya.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return LinearFit(float(slope), float(intercept), r2, len(xa))


def fit_vs_n(summaries: Sequence[Summary]) -> dict[tuple, LinearFit]:
    """NAoI-versus-N fit for every (architecture, lambda) with 2+ values of N."""
    groups: dict[tuple, list[Summary]] = defaultdict(list)
    for s in summaries:
        groups[(s.arch, s.lambda_hz)].append(s)
    out = {}
    for key, ss in sorted(groups.items()):
        ns = sorted({s.n_sources for s in ss})
        if len(ns) < 2:
            continue
        ss = sorted(ss, key=lambda s: s.n_sources)
        out[key] = linear_fit([s.n_sources for s in ss], [s.naoi_mean_s for s in ss])
    return out


# -- M/M/1 tables -------------------------------------------------------

MM1_COLUMNS = ("rho", "fcfs_oracle", "fcfs_sim", "lcfs_oracle", "lcfs_sim")


def mm1_table(rhos: Sequence[float], deliveries: int, seed: int = 0, mu: float = 1.0) -> list[dict]:
    """Oracle and simulated ages per load. Every point and both disciplines
    share ``seed``, so differences along the table are paired."""
    from .sim.mm1 import FCFS, LCFS, mm1_age_oracle, simulate_fast

    rows = []
    for rho in rhos:
        lam = rho * mu
        rows.append({
            "rho": rho,
            "fcfs_oracle": mm1_age_oracle(lam, mu, FCFS),
            "fcfs_sim": simulate_fast(lam, mu, FCFS, deliveries, seed).average_age,
            "lcfs_oracle": mm1_age_oracle(lam, mu, LCFS),
            "lcfs_sim": simulate_fast(lam, mu, LCFS, deliveries, seed).average_age,
        })
    return rows


def mm1_minimizer(rows: Sequence[dict], column: str = "fcfs_sim") -> float:
    return min(rows, key=lambda r: r[column])["rho"]


# -- output -----------------------------------------------------------

def write_table(rows: Sequence[dict], out: TextIO, columns: Optional[Sequence[str]] = None, sep: str = "\t") -> None:
    if not rows:
        return
    columns = list(columns or rows[0].keys())
    out.write(sep.join(columns) + "\n")
    for r in rows:
        out.write(sep.join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in columns) + "\n")


def read_table(path: str | Path, sep: str = "\t") -> list[dict]:
    """Read a table written by ``write_table``; numeric cells become floats."""
    import csv

    with open(path, newline="") as fh:
        rows = []
        for r in csv.DictReader(fh, delimiter=sep):
            conv = {}
            for k, v in r.items():
                try:
                    conv[k] = float(v)
                except (TypeError, ValueError):
                    conv[k] = v
            rows.append(conv)
    return rows
