"""One-axis parameter sweeps."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, TextIO

from .config import ConfigError, SimConfig
from .metrics import MetricsLog, write_csv

LAMBDA_GRID = (100, 250, 500, 750, 1000, 2000, 5000)
N_GRID = (1, 2, 4, 6, 8, 10, 12, 16, 20, 24)
AXES = ("lambda", "n", "capacity")


@dataclass
class PointError:
    index: int
    value: float
    message: str


@dataclass
class SweepResult:
    axis: str
    grid: tuple
    logs: list[MetricsLog] = field(default_factory=list)
    errors: list[PointError] = field(default_factory=list)

    def write_csv(self, out: TextIO, header: bool = True) -> None:
        write_csv(self.logs, out, header)


def point_config(base: SimConfig, axis: str, value, index: int) -> SimConfig:
    """The config of grid point ``index``; its seed is ``base.seed ^ index``."""
    seed = base.seed ^ index
    if axis == "lambda":
        traffic = tuple(replace(t, rate_hz=float(value)) for t in base.traffic)
        return replace(base, traffic=traffic, seed=seed)
    if axis == "n":
        return replace(base, n_sources=int(value), seed=seed)
    if axis == "capacity":
        return replace(base, fcfs_capacity=int(value), seed=seed)
    raise ConfigError([f"axis must be one of {AXES}"])


def _run_point(config: SimConfig) -> MetricsLog:
    from . import run

    return run(config)


def sweep(
    base: SimConfig,
    axis: str,
    grid: Sequence,
    workers: int = 1,
    runner: Optional[Callable[[SimConfig], MetricsLog]] = None,
) -> SweepResult:
    """Run every grid point; a failing point is recorded and skipped."""
    if axis not in AXES:
        raise ConfigError([f"axis must be one of {AXES}"])
    if not grid:
        raise ConfigError(["grid must not be empty"])
    runner = runner or _run_point
    result = SweepResult(axis, tuple(grid))
    configs = []
    for i, value in enumerate(grid):
        try:
            configs.append((i, value, point_config(base, axis, value, i).validate()))
        except (ConfigError, ValueError) as exc:
            result.errors.append(PointError(i, value, str(exc)))
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            futures = [(i, v, pool.submit(runner, c)) for i, v, c in configs]
            outcomes = []
            for i, v, fut in futures:
                try:
                    outcomes.append((i, v, fut.result(), None))
                except Exception as exc:  # noqa: BLE001 - reported per point
                    outcomes.append((i, v, None, exc))
    else:
        outcomes = []
        for i, v, c in configs:
            try:
                outcomes.append((i, v, runner(c), None))
            except Exception as exc:  # noqa: BLE001 - reported per point
                outcomes.append((i, v, None, exc))
    for i, v, log, exc in outcomes:
        if exc is None:
            result.logs.append(log)
        else:
            result.errors.append(PointError(i, v, f"{type(exc).__name__}: {exc}"))
    result.errors.sort(key=lambda e: e.index)
    return result
