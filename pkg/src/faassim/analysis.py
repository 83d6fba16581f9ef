"""What-if parameter sweeps, replication summaries and cost estimation."""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import IO, Any, Mapping, Sequence

import numpy as np

from ._parallel import map_jobs
from .engine import SimConfig, SimReport, run
from .errors import ConfigError
from .parsim import ParConfig, run_par
from .stochastic import Deterministic, Exponential
from .temporal import mean_ci

SWEEP_AXES = ("arrival_rate", "expiration_threshold", "max_concurrency", "concurrency_value")
DEFAULT_BUDGET = 10_000

REPORT_METRICS = (
    "cold_start_probability",
    "rejection_probability",
    "avg_server_count",
    "avg_running_count",
    "avg_idle_count",
    "avg_lifespan",
    "avg_utilization",
    "avg_wasted_capacity",
    "requests_total",
    "requests_cold",
    "requests_warm",
    "requests_rejected",
)


def simulate(config: SimConfig) -> SimReport:
    """Run the engine, or the concurrent-instance variant when ``concurrency_value > 1``."""
    if isinstance(config, ParConfig) and config.concurrency_value > 1:
        return run_par(config)[0]
    return run(config)[0]


def apply_axis(config: SimConfig, axis: str, value: Any) -> SimConfig:
    """Copy of ``config`` with one sweep parameter set."""
    if axis == "arrival_rate":
        arrival = config.arrival
        if isinstance(arrival, Exponential):
            return config.replace(arrival=Exponential(value))
        if isinstance(arrival, Deterministic):
            if not value > 0:
                raise ConfigError(f"arrival rate must be positive, got {value!r}", "sweep.axes.arrival_rate")
            return config.replace(arrival=Deterministic(1.0 / value))
        raise ConfigError(
            f"arrival_rate axis needs an exponential or deterministic arrival process, got {arrival.kind}",
            "sweep.axes.arrival_rate",
        )
    if axis == "expiration_threshold":
        return config.replace(expiration_threshold=value)
    if axis == "max_concurrency":
        return config.replace(max_concurrency=value)
    if axis == "concurrency_value":
        if isinstance(config, ParConfig):
            return config.replace(concurrency_value=value)
        return ParConfig.from_sim_config(config, value)
    raise ConfigError(f"unknown sweep axis {axis!r} (expected one of {list(SWEEP_AXES)})", f"sweep.axes.{axis}")


@dataclass(frozen=True)
class SweepSpec:
    """Cartesian grid over ``axes`` with ``replications`` runs per point.

    With ``common_random_numbers`` every grid point reuses the same seeds
    (``base.seed + replica``) so compared points see the same random draws;
    otherwise seeds are ``base.seed + point * replications + replica``.
    """

    base: SimConfig
    axes: tuple[tuple[str, tuple], ...]
    replications: int = 1
    budget: int = DEFAULT_BUDGET
    common_random_numbers: bool = False

    def __post_init__(self):
        axes = self.axes.items() if isinstance(self.axes, Mapping) else self.axes
        norm = []
        for name, values in axes:
            if name not in SWEEP_AXES:
                raise ConfigError(
                    f"unknown sweep axis {name!r} (expected one of {list(SWEEP_AXES)})", f"sweep.axes.{name}"
                )
            if isinstance(values, (str, bytes)) or not isinstance(values, Sequence) or not values:
                raise ConfigError("expected a non-empty list of values", f"sweep.axes.{name}")
            norm.append((name, tuple(values)))
        object.__setattr__(self, "axes", tuple(norm))
        if isinstance(self.replications, bool) or not isinstance(self.replications, int) or self.replications < 1:
            raise ConfigError(f"must be an integer >= 1, got {self.replications!r}", "sweep.replications")
        if self.n_runs > self.budget:
            raise ConfigError(
                f"{self.n_points} grid points x {self.replications} replications exceeds the budget of {self.budget} runs",
                "sweep.budget",
            )

    @property
    def n_points(self) -> int:
        return math.prod(len(v) for _, v in self.axes)

    @property
    def n_runs(self) -> int:
        return self.n_points * self.replications

    def points(self) -> list[dict[str, Any]]:
        names = [n for n, _ in self.axes]
        return [dict(zip(names, combo)) for combo in itertools.product(*(v for _, v in self.axes))]

    def configs(self) -> list[tuple[dict, list[SimConfig]]]:
        out = []
        for i, point in enumerate(self.points()):
            cfg = self.base
            for axis, value in point.items():
                cfg = apply_axis(cfg, axis, value)
            if self.common_random_numbers:
                seeds = [self.base.seed + r for r in range(self.replications)]
            else:
                seeds = [self.base.seed + i * self.replications + r for r in range(self.replications)]
            out.append((point, [cfg.replace(seed=s) for s in seeds]))
        return out


@dataclass
class SweepRow:
    point: dict[str, Any]
    mean: dict[str, float]
    ci: dict[str, float]
    reports: list[SimReport] = field(default_factory=list, repr=False)


def summarize(reports: Sequence[SimReport]) -> tuple[dict[str, float], dict[str, float]]:
    """Across-replication mean and 95% CI half-width of every scalar metric."""
    means, cis = {}, {}
    for name in REPORT_METRICS:
        values = np.array([float(getattr(r, name)) for r in reports])
        m, h = mean_ci(values[:, None])
        means[name] = float(m[0])
        cis[name] = float(h[0])
    return means, cis


def sweep(spec: SweepSpec, jobs: int = 1) -> list[SweepRow]:
    plan = spec.configs()
    flat = [cfg for _, cfgs in plan for cfg in cfgs]
    reports = map_jobs(simulate, flat, jobs)
    rows = []
    k = 0
    for point, cfgs in plan:
        chunk = reports[k : k + len(cfgs)]
        k += len(cfgs)
        mean, ci = summarize(chunk)
        rows.append(SweepRow(point, mean, ci, chunk))
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], fh: IO[str]):
    if not rows:
        return
    axes = list(rows[0].point)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(axes + list(REPORT_METRICS) + [f"ci_{m}" for m in REPORT_METRICS])
    for row in rows:
        w.writerow(
            [_fmt(row.point[a]) for a in axes]
            + [_fmt(row.mean[m]) for m in REPORT_METRICS]
            + [_fmt(row.ci[m]) for m in REPORT_METRICS]
        )


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass(frozen=True)
class CostSpec:
    """Prices for developer and provider cost rates.

    ``billed_cold_fraction`` is the share of a cold request's duration that is
    billed (platform initialization is typically free, application
    initialization and service are not).
    """

    price_per_request: float = 0.0
    price_per_memory_second: float = 0.0
    memory: float = 0.0
    billed_cold_fraction: float = 1.0
    provider_unit_cost: float = 0.0

    def __post_init__(self):
        for name in ("price_per_request", "price_per_memory_second", "memory", "provider_unit_cost"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0:
                raise ConfigError(f"must be a non-negative number, got {v!r}", f"cost.{name}")
        f = self.billed_cold_fraction
        if isinstance(f, bool) or not isinstance(f, (int, float)) or not 0 <= f <= 1:
            raise ConfigError(f"must be within [0, 1], got {f!r}", "cost.billed_cold_fraction")


def estimate_cost(
    report: SimReport, arrival_rate: float, warm_mean: float, cold_mean: float, cost: CostSpec
) -> dict[str, float]:
    """Developer and provider cost per second of operation.

    The developer pays per accepted request plus memory-seconds of billed
    execution (cold requests billed for ``billed_cold_fraction`` of their
    duration). The provider's cost is proportional to the average number of
    live instances.
    """
    p_cold = report.cold_start_probability
    accepted = arrival_rate * (1.0 - report.rejection_probability)
    billed = p_cold * cost.billed_cold_fraction * cold_mean + (1.0 - p_cold) * warm_mean
    developer = accepted * (cost.price_per_request + cost.price_per_memory_second * cost.memory * billed)
    provider = cost.provider_unit_cost * report.avg_server_count
    return {"developer_cost_rate": developer, "provider_cost_rate": provider}
