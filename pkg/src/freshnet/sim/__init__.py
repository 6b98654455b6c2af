"""Discrete-event simulation of polling and random access."""
from .config import ConfigError, SimConfig, TrafficSpec
from .metrics import CSV_COLUMNS, MetricsLog, SchemaError, read_csv, write_csv
from .mm1 import InstabilityError, mm1_age_oracle
from .polling import PollingSimulation
from .random_access import RandomAccessSimulation
from .sweep import LAMBDA_GRID, N_GRID, SweepResult, sweep


def run(config: SimConfig) -> MetricsLog:
    """Simulate ``config``; identical input gives an identical log."""
    config.validate()
    if config.access == "polling":
        return PollingSimulation(config).run()
    return RandomAccessSimulation(config).run()


__all__ = [
    "CSV_COLUMNS", "ConfigError", "InstabilityError", "MetricsLog", "PollingSimulation",
    "RandomAccessSimulation", "SchemaError", "SimConfig", "TrafficSpec", "mm1_age_oracle",
    "LAMBDA_GRID", "N_GRID", "SweepResult", "read_csv", "run", "sweep", "write_csv",
]
