"""Run results and the shared CSV schema."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, TextIO

CSV_COLUMNS = (
    "config_hash", "policy", "access", "queue", "n_sources", "lambda_hz", "seed",
    "horizon_s", "naoi_s", "throughput_bps", "deliveries", "drops", "timeouts",
)
_NUMERIC = {
    "n_sources": int, "lambda_hz": float, "seed": int, "horizon_s": float, "naoi_s": float,
    "throughput_bps": float, "deliveries": int, "drops": int, "timeouts": int,
}


class SchemaError(ValueError):
    def __init__(self, column: str, message: str) -> None:
        super().__init__(f"column {column!r}: {message}")
        self.column = column


@dataclass
class InstanceMetrics:
    source_id: int
    info_type: int
    average_age_s: float
    deliveries: int = 0
    fresh_deliveries: int = 0
    generated: int = 0
    drops: int = 0
    lost: int = 0
    in_flight: int = 0
    queued: int = 0
    polls: int = 0
    timeouts: int = 0
    payload_bytes: int = 0


@dataclass
class MetricsLog:
    config_hash: str
    policy: str
    access: str
    queue: str
    n_sources: int
    lambda_hz: float
    seed: int
    horizon_s: float
    naoi_s: float
    throughput_bps: float
    deliveries: int
    drops: int
    timeouts: int
    instances: list[InstanceMetrics] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {c: getattr(self, c) for c in CSV_COLUMNS}

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(logs: Iterable[MetricsLog | dict], out: TextIO, header: bool = True) -> None:
    w = csv.writer(out, lineterminator="\n")
    if header:
        w.writerow(CSV_COLUMNS)
    for log in logs:
        row = log.row() if isinstance(log, MetricsLog) else log
        w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])


def csv_text(logs: Iterable[MetricsLog | dict]) -> str:
    buf = io.StringIO()
    write_csv(logs, buf)
    return buf.getvalue()


def read_csv(path: str | Path | TextIO) -> list[dict]:
    """Parse a metrics CSV, checking the header and numeric columns."""
    if isinstance(path, (str, Path)):
        with open(path, newline="") as fh:
            return read_csv(fh)
    reader = csv.reader(path)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("config_hash", "empty file") from None
    for i, col in enumerate(CSV_COLUMNS):
        if i >= len(header):
            raise SchemaError(col, "missing")
        if header[i] != col:
            raise SchemaError(col, f"expected at position {i}, found {header[i]!r}")
    if len(header) != len(CSV_COLUMNS):
        raise SchemaError(header[len(CSV_COLUMNS)], "unexpected extra column")
    rows = []
    for line, values in enumerate(reader, start=2):
        if not values:
            continue
        if len(values) != len(CSV_COLUMNS):
            raise SchemaError(CSV_COLUMNS[min(len(values), len(CSV_COLUMNS) - 1)],
                              f"line {line} has {len(values)} fields")
        row = {}
        for col, v in zip(CSV_COLUMNS, values):
            conv = _NUMERIC.get(col)
            try:
                row[col] = conv(v) if conv else v
            except ValueError:
                raise SchemaError(col, f"line {line}: cannot parse {v!r}") from None
        rows.append(row)
    return rows
