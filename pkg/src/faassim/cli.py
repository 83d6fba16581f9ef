"""Command-line interface: ``faassim {run,transient,sweep,cost,trace-metrics}``.

Exit status is 0 on success, 2 for invalid input (config or log) and 1 for
internal errors.
"""
from __future__ import annotations

import argparse
import contextlib
import datetime as _dt
import json
import sys
import time
from pathlib import Path

from . import __version__
from .analysis import estimate_cost, simulate, sweep, write_sweep_csv
from .config import ConfigFile, load_config
from .engine import EventTrace, ServerlessSimulator
from .errors import ConfigError, EstimationError
from .parsim import ParConfig, ParServerlessSimulator
from .temporal import EnsembleCurve, run_ensemble, run_transient
from .trace import empirical_metrics, estimate_parameters, read_records, records_from_events


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


@contextlib.contextmanager
def _output(path):
    if path is None or str(path) == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _load(args) -> ConfigFile:
    cf = load_config(args.config)
    sim = cf.sim
    if getattr(args, "seed", None) is not None:
        sim = sim.replace(seed=args.seed)
    c = getattr(args, "concurrency_value", None)
    if c is not None:
        if c < 1:
            raise ConfigError(f"must be >= 1, got {c}", "--concurrency-value")
        if isinstance(sim, ParConfig):
            sim = sim.replace(concurrency_value=c)
        elif c != 1:
            sim = ParConfig.from_sim_config(sim, c)
    cf.sim = sim
    return cf


def _simulator(config):
    if isinstance(config, ParConfig) and config.concurrency_value > 1:
        return ParServerlessSimulator
    return ServerlessSimulator


def cmd_run(args) -> int:
    cf = _load(args)
    report, trace = _simulator(cf.sim)(cf.sim, record_trace=args.emit_trace is not None).run()
    if args.emit_trace is not None:
        with _output(args.emit_trace) as fh:
            trace.write_csv(fh)
    with _output(args.out) as fh:
        fh.write(_dump(report.to_dict()))
    return 0


def cmd_transient(args) -> int:
    cf = _load(args)
    horizon = cf.sim.horizon
    if cf.replications >= 2:
        curve = run_ensemble(cf.sim, cf.initial_state, horizon, cf.replications, cf.grid_step, jobs=args.jobs)
        report = curve.reports[0]
    else:
        report, series = run_transient(cf.sim, cf.initial_state, horizon, cf.grid_step)
        curve = EnsembleCurve.from_series(series, report)
    if args.out is not None:
        with _output(args.out) as fh:
            curve.write_csv(fh)
    sys.stdout.write(_dump(report.to_dict()))
    return 0


def cmd_sweep(args) -> int:
    cf = _load(args)
    rows = sweep(cf.sweep_spec(), jobs=args.jobs)
    with _output(args.out) as fh:
        write_sweep_csv(rows, fh)
    return 0


def cmd_cost(args) -> int:
    cf = _load(args)
    if cf.cost is None:
        raise ConfigError("missing required key 'cost'", "cost")
    sim = cf.sim
    report = simulate(sim)
    inputs = {
        "arrival_rate": 1.0 / sim.arrival.mean(),
        "warm_mean": sim.warm_service.mean(),
        "cold_mean": sim.cold_service.mean(),
    }
    rates = estimate_cost(report, cost=cf.cost, **inputs)
    with _output(args.out) as fh:
        fh.write(_dump({"cost": rates, "inputs": inputs, "report": report.to_dict()}))
    return 0


def cmd_trace_metrics(args) -> int:
    with open(args.log, newline="") as fh:
        if args.events:
            records = records_from_events(EventTrace.read_csv(fh), start=args.start)
        else:
            records = read_records(fh)
    metrics = empirical_metrics(records, window=args.window, sample_step=args.step)
    try:
        est = estimate_parameters(records)
        params = {
            "arrival_rate": est["arrival_rate"],
            "warm_mean": est["warm_mean"],
            "cold_mean": est["cold_mean"],
            "warm_count": len(est["warm_empirical"].samples),
            "cold_count": len(est["cold_empirical"].samples),
        }
    except EstimationError as exc:
        params = None
        print(f"warning: {exc}", file=sys.stderr)
    if args.series_out is not None:
        with _output(args.series_out) as fh:
            metrics.write_csv(fh)
    with _output(args.out) as fh:
        fh.write(_dump({"parameters": params, "metrics": metrics.summary()}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="faassim", description="Scale-per-request serverless platform simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help="output path (default: stdout)"):
        p.add_argument("config", type=Path, help="JSON or YAML config file")
        p.add_argument("--seed", type=int, help="override simulation.seed")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for replications")
        p.add_argument("--concurrency-value", type=int, help="requests one instance may serve at once")
        p.add_argument("--out", type=Path, help=out_help)
        p.add_argument("--meta", type=Path, help="write run metadata (wall clock, version) to this JSON file")

    p = sub.add_parser("run", help="steady-state simulation, JSON report")
    common(p, "write the JSON report here instead of stdout")
    p.add_argument("--emit-trace", type=Path, help="write the event trace CSV (time,kind,instance_id)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("transient", help="run from the config's initial_state; JSON report, curve CSV to --out")
    common(p, "write the time-series CSV (t,metric,mean,ci_low,ci_high) here")
    p.set_defaults(func=cmd_transient)

    p = sub.add_parser("sweep", help="what-if grid over the config's sweep axes, CSV")
    common(p, "write the sweep CSV here instead of stdout")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("cost", help="developer and provider cost rates, JSON")
    common(p, "write the JSON here instead of stdout")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("trace-metrics", help="parameters and warm-pool metrics of a request log, JSON")
    p.add_argument("log", type=Path, help="CSV with start_time,response_time,is_cold,instance_id")
    p.add_argument("--events", action="store_true", help="input is an event trace written by `run --emit-trace`")
    p.add_argument("--start", type=float, default=0.0, help="with --events: ignore arrivals before this time")
    p.add_argument("--window", type=float, default=600.0, help="warm-pool window in seconds")
    p.add_argument("--step", type=float, default=10.0, help="sampling step in seconds")
    p.add_argument("--series-out", type=Path, help="write the sampled count series CSV here")
    p.add_argument("--out", type=Path, help="write the JSON here instead of stdout")
    p.add_argument("--meta", type=Path, help="write run metadata to this JSON file")
    p.set_defaults(func=cmd_trace_metrics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.time()
    try:
        code = args.func(args)
    except (ConfigError, EstimationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if args.meta is not None:
        meta = {
            "version": __version__,
            "command": args.command,
            "started_at": _dt.datetime.fromtimestamp(started, _dt.timezone.utc).isoformat(),
            "wall_clock_seconds": time.time() - started,
        }
        Path(args.meta).write_text(_dump({"meta": meta}))
    return code


if __name__ == "__main__":
    sys.exit(main())
