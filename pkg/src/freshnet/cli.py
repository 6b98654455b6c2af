"""Command-line entry point.

Exit status: 0 on success, 2 for configuration or input errors, 3 when a
run fails at runtime.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from typing import Optional, Sequence

from . import analyze as an
from .expfile import ExpFileError, load, render
from .harness import (
    DestinationUnreachable,
    HarnessConfig,
    HarnessConfigError,
    run_destination,
    run_source,
)
from .sim import ConfigError, SchemaError, SimConfig, run, write_csv
from .sim.mm1 import rho_grid
from .sim.sweep import AXES, LAMBDA_GRID, N_GRID, sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

DEFAULT_GRIDS = {"lambda": LAMBDA_GRID, "n": N_GRID, "capacity": (1, 10, 100, 1000)}


class UsageError(ValueError):
    pass


def _number_list(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"not a comma-separated list of numbers: {text!r}") from None
    return [int(v) if v.is_integer() else v for v in vals]


def _sim_config(args) -> SimConfig:
    if args.config:
        exp = load(args.config)
        if not isinstance(exp.config, SimConfig):
            raise UsageError(f"{args.config} describes a harness run, not a simulation")
        if not exp.hash_matches:
            print(f"warning: {args.config}: recorded config_hash {exp.recorded_hash} "
                  f"differs from {exp.config.config_hash()}", file=sys.stderr)
        cfg = exp.config
    else:
        cfg = SimConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.horizon is not None:
        changes["horizon_s"] = args.horizon
    return dataclasses.replace(cfg, **changes).validate()


def _out(path: Optional[str]):
    return open(path, "w", newline="") if path else sys.stdout


def cmd_simulate(args) -> int:
    cfg = _sim_config(args)
    log = run(cfg)
    fh = _out(args.out)
    try:
        if args.json:
            fh.write(log.to_json() + "\n")
        else:
            write_csv([log], fh)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _sim_config(args)
    grid = _number_list(args.grid) if args.grid else list(DEFAULT_GRIDS[args.axis])
    if not grid:
        raise UsageError("grid must not be empty")
    fh = _out(args.out)
    failed = 0
    try:
        for r in range(args.replicates):
            base = dataclasses.replace(cfg, seed=cfg.seed + 1000 * r)
            result = sweep(base, args.axis, grid, workers=args.workers)
            result.write_csv(fh, header=(r == 0))
            for e in result.errors:
                failed += 1
                print(f"point {e.index} ({args.axis}={e.value}): {e.message}", file=sys.stderr)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_mm1(args) -> int:
    rhos = _number_list(args.rho) if args.rho else rho_grid()
    rows = an.mm1_table(rhos, args.deliveries, args.seed or 0)
    fh = _out(args.out)
    try:
        an.write_table(rows, fh, an.MM1_COLUMNS)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def _harness_config(args, role: str) -> HarnessConfig:
    base = HarnessConfig(role=role)
    if args.config:
        exp = load(args.config)
        if not isinstance(exp.config, HarnessConfig):
            raise UsageError(f"{args.config} describes a simulation, not a harness run")
        base = dataclasses.replace(exp.config, role=role)
    changes = {}
    mapping = {
        "bind": "bind", "peer": "peer", "source_id": "source_id", "duration": "duration_s",
        "timeout_ms": "timeout_ms", "mtu": "mtu_payload", "metrics_out": "metrics_out",
        "seed": "seed", "report": "report_out", "delivery_log": "delivery_log",
        "sent_log": "sent_log", "jitter": "jitter", "poll_rate": "poll_rate_hz",
        "clock_skew_us": "clock_skew_us", "sync_rounds": "sync_rounds", "resync_s": "resync_s",
        "register_attempts": "register_attempts",
    }
    for arg, field in mapping.items():
        value = getattr(args, arg, None)
        if value is not None:
            changes[field] = value
    if getattr(args, "profile", None):
        changes["profiles"] = tuple(p.strip() for p in args.profile.split(",") if p.strip())
    return dataclasses.replace(base, **changes).validate()


def cmd_serve_destination(args) -> int:
    cfg = _harness_config(args, "destination")

    def ready(addr):
        print(f"listening {addr[0]}:{addr[1]}", flush=True)

    report = run_destination(cfg, on_ready=ready)
    m = report.metrics
    print(f"deliveries {m.deliveries} naoi_s {m.naoi_s!r} timeouts {m.timeouts} corrupt {report.corrupt}",
          flush=True)
    return EXIT_OK


def cmd_serve_source(args) -> int:
    cfg = _harness_config(args, "source")
    report = run_source(cfg)
    print(report.to_json(), flush=True)
    return EXIT_OK


def cmd_analyze(args) -> int:
    out = sys.stdout
    if args.mm1:
        rows = an.read_table(args.mm1)
        if not rows or "rho" not in rows[0]:
            raise SchemaError("rho", "missing from M/M/1 table")
        for col in ("fcfs_sim", "fcfs_oracle"):
            if col in rows[0]:
                out.write(f"{col}_minimizer\t{an.mm1_minimizer(rows, col)!r}\n")
    if not args.logs:
        return EXIT_OK
    summaries = an.summarize(an.load_rows(args.logs))
    an.write_table([s.row() for s in summaries], out, an.SUMMARY_COLUMNS)
    if args.baseline:
        parts = tuple(args.baseline.split("/"))
        if len(parts) != 3:
            raise UsageError("--baseline must be access/queue/policy")
        ratios = an.ratio_table(summaries, parts)
        if ratios:
            out.write("\n")
            an.write_table(ratios, out)
    if args.fit:
        fits = an.fit_vs_n(summaries)
        if fits:
            out.write("\n")
            rows = [
                {"arch": "/".join(arch), "lambda_hz": lam, "slope_s_per_source": f.slope,
                 "intercept_s": f.intercept, "r2": f.r2, "points": f.points}
                for (arch, lam), f in fits.items()
            ]
            an.write_table(rows, out)
    return EXIT_OK


def cmd_render(args) -> int:
    if args.kind == "sim":
        cfg = SimConfig() if not args.config else load(args.config).config
    else:
        cfg = HarnessConfig() if not args.config else load(args.config).config
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    sys.stdout.write(render(cfg))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="freshnet", description="Age-of-information polling toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one simulation, print a CSV row")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--horizon", type=float, help="seconds")
    s.add_argument("--out")
    s.add_argument("--json", action="store_true", help="full log with per-instance metrics")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="run a one-axis sweep, print CSV")
    s.add_argument("--config")
    s.add_argument("--axis", choices=AXES, required=True)
    s.add_argument("--grid", help="comma-separated values (default: the standard grid)")
    s.add_argument("--seed", type=int)
    s.add_argument("--horizon", type=float)
    s.add_argument("--replicates", type=int, default=1, help="repeat with base seeds seed+1000*r")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("mm1", help="M/M/1 age table: oracle and simulation per load")
    s.add_argument("--rho", help="comma-separated loads (default 0.1..0.9 step 0.05)")
    s.add_argument("--deliveries", type=int, default=1_000_000)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_mm1)

    for name, func, role in (
        ("serve-destination", cmd_serve_destination, "destination"),
        ("serve-source", cmd_serve_source, "source"),
    ):
        s = sub.add_parser(name)
        s.add_argument("--config")
        s.add_argument("--role", choices=(role,), default=role)
        s.add_argument("--bind")
        s.add_argument("--peer")
        s.add_argument("--source-id", type=int)
        s.add_argument("--profile", help="comma-separated: gps, imu, camera")
        s.add_argument("--duration", type=float, help="seconds")
        s.add_argument("--timeout-ms", type=float)
        s.add_argument("--mtu", type=int, help="payload bytes per fragment")
        s.add_argument("--metrics-out")
        s.add_argument("--seed", type=int)
        s.add_argument("--report", help="write a JSON report here on exit")
        s.add_argument("--jitter", type=float)
        s.add_argument("--sync-rounds", type=int)
        if role == "destination":
            s.add_argument("--delivery-log")
            s.add_argument("--poll-rate", type=float, help="cap on polls per second")
            s.add_argument("--resync-s", type=float)
        else:
            s.add_argument("--sent-log")
            s.add_argument("--clock-skew-us", type=int)
            s.add_argument("--register-attempts", type=int)
        s.set_defaults(func=func)

    s = sub.add_parser("analyze", help="summaries, ratios and fits from metrics CSVs")
    s.add_argument("logs", nargs="*")
    s.add_argument("--baseline", help="access/queue/policy to compare against")
    s.add_argument("--fit", action="store_true", help="linear fit of NAoI versus N")
    s.add_argument("--mm1", help="table written by the mm1 command")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("render", help="print an experiment file")
    s.add_argument("kind", choices=("sim", "harness"))
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_render)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, HarnessConfigError, ExpFileError, SchemaError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DestinationUnreachable, OSError, RuntimeError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
