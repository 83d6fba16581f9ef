"""Transient analysis from a custom warm-pool snapshot, and replication ensembles."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import IO, Any, Mapping, Sequence

import numpy as np

from ._parallel import map_jobs
from .engine import GridSeries, ServerlessSimulator, SimConfig, SimReport
from .errors import ConfigError
from .stochastic import ProcessSpec

Z95 = NormalDist().inv_cdf(0.975)

ENSEMBLE_METRICS = ("instance_count", "running_count", "avg_instance_count", "cold_start_probability")


@dataclass(frozen=True)
class InstanceSnapshot:
    """One pre-existing instance at the start of a transient run.

    ``creation_time_offset`` is relative to the run start (so <= 0).
    ``time_in_state`` is how long the instance has been in ``state``;
    ``remaining_busy`` is the time left on the request a busy instance serves.
    """

    state: str
    creation_time_offset: float = 0.0
    time_in_state: float = 0.0
    remaining_busy: float | None = None

    def __post_init__(self):
        if self.state not in ("idle", "busy"):
            raise ConfigError(f"state must be 'idle' or 'busy', got {self.state!r}", "state")
        if not self.creation_time_offset <= 0:
            raise ConfigError(f"must be <= 0, got {self.creation_time_offset!r}", "creation_time_offset")
        if not self.time_in_state >= 0:
            raise ConfigError(f"must be >= 0, got {self.time_in_state!r}", "time_in_state")
        if self.state == "busy":
            if self.remaining_busy is None or not self.remaining_busy > 0:
                raise ConfigError(f"busy snapshot needs remaining_busy > 0, got {self.remaining_busy!r}", "remaining_busy")
        elif self.remaining_busy is not None:
            raise ConfigError("remaining_busy is only valid for busy snapshots", "remaining_busy")


@dataclass(frozen=True)
class InitialState:
    instances: tuple[InstanceSnapshot, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))

    def validate(self, config: SimConfig):
        thr = config.expiration_threshold
        if isinstance(thr, ProcessSpec):
            return
        for i, snap in enumerate(self.instances):
            if snap.state == "idle" and not snap.time_in_state < thr:
                raise ConfigError(
                    f"idle time {snap.time_in_state!r} must be below the expiration threshold {thr!r}",
                    f"initial_state.instances[{i}].time_in_state",
                )

    @classmethod
    def from_dict(cls, doc: Any, path: str = "initial_state") -> InitialState:
        """Accept ``{"instances": [...]}`` or a bare list of snapshot mappings."""
        if isinstance(doc, Mapping):
            extra = set(doc) - {"instances"}
            if extra:
                key = sorted(extra)[0]
                raise ConfigError(f"unknown key '{path}.{key}'", f"{path}.{key}")
            items = doc.get("instances", [])
            path = f"{path}.instances"
        else:
            items = doc
        if not isinstance(items, Sequence) or isinstance(items, str):
            raise ConfigError("expected a list of instance snapshots", path)
        known = set(InstanceSnapshot.__dataclass_fields__)
        snaps = []
        for i, item in enumerate(items):
            where = f"{path}[{i}]"
            if not isinstance(item, Mapping):
                raise ConfigError("expected a mapping", where)
            for key in item:
                if key not in known:
                    raise ConfigError(f"unknown key '{where}.{key}'", f"{where}.{key}")
            if "state" not in item:
                raise ConfigError(f"missing required key '{where}.state'", f"{where}.state")
            try:
                snaps.append(InstanceSnapshot(**item))
            except ConfigError as exc:
                raise ConfigError(str(exc), f"{where}.{exc.field}") from None
            except TypeError as exc:
                raise ConfigError(str(exc), where) from None
        return cls(tuple(snaps))

    def to_dict(self) -> dict:
        return {
            "instances": [
                {k: v for k, v in vars(s).items() if v is not None} for s in self.instances
            ]
        }


def _default_grid(horizon, grid_step):
    if grid_step is None:
        grid_step = horizon / 100
    if not grid_step > 0:
        raise ConfigError(f"must be positive, got {grid_step!r}", "grid_step")
    n = int(math.floor(horizon / grid_step + 1e-9))
    grid = np.arange(n + 1) * grid_step
    if grid[-1] < horizon:
        grid = np.append(grid, horizon)
    return grid


def run_transient(
    config: SimConfig,
    init: InitialState | None = None,
    horizon: float | None = None,
    grid_step: float | None = None,
    record_trace: bool = False,
):
    """Simulate ``[0, horizon]`` starting from ``init``.

    Returns ``(report, series)``; the warm-up skip is forced to zero. With
    ``record_trace`` a third element, the event trace, is returned.
    """
    horizon = config.horizon if horizon is None else horizon
    if not horizon > 0:
        raise ConfigError(f"must be positive, got {horizon!r}", "horizon")
    cfg = config.replace(horizon=float(horizon), skip_initial=0.0)
    init = init or InitialState()
    init.validate(cfg)
    sim = _simulator_for(cfg)(cfg, initial_state=init, grid=_default_grid(cfg.horizon, grid_step), record_trace=record_trace)
    report, trace = sim.run()
    if record_trace:
        return report, sim.series, trace
    return report, sim.series


def _simulator_for(config):
    # avoid an import cycle: parsim builds on the engine
    from .parsim import ParConfig, ParServerlessSimulator

    return ParServerlessSimulator if isinstance(config, ParConfig) else ServerlessSimulator


@dataclass
class EnsembleCurve:
    """Per-grid-point mean and 95% CI half-width of each metric across runs."""

    t: np.ndarray
    mean: dict[str, np.ndarray]
    half_width: dict[str, np.ndarray]
    n_runs: int
    reports: list[SimReport] = field(default_factory=list, repr=False)

    @classmethod
    def from_series(cls, series: GridSeries, report: SimReport | None = None) -> EnsembleCurve:
        """Single-run curve; half-widths are nan."""
        mean, half = {}, {}
        for name, values in _series_metrics(series).items():
            mean[name], half[name] = mean_ci(values[None, :])
        return cls(series.t, mean, half, 1, [report] if report is not None else [])

    def ci(self, metric: str) -> tuple[np.ndarray, np.ndarray]:
        m, h = self.mean[metric], self.half_width[metric]
        return m - h, m + h

    def rows(self):
        for metric in self.mean:
            lo, hi = self.ci(metric)
            for t, m, a, b in zip(self.t.tolist(), self.mean[metric].tolist(), lo.tolist(), hi.tolist()):
                yield t, metric, m, a, b

    def write_csv(self, fh: IO[str]):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "metric", "mean", "ci_low", "ci_high"])
        for t, metric, m, a, b in self.rows():
            w.writerow([repr(t), metric, _cell(m), _cell(a), _cell(b)])


def _cell(v):
    # undefined values (e.g. cold-start fraction before any arrival) stay empty
    return "" if math.isnan(v) else repr(v)


def _series_metrics(series: GridSeries) -> dict[str, np.ndarray]:
    return {
        "instance_count": series.server_count,
        "running_count": series.running_count,
        "avg_instance_count": series.avg_server_count,
        "cold_start_probability": series.cold_start_probability,
    }


def mean_ci(samples: np.ndarray, axis: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Mean and normal-approximation 95% half-width along ``axis``, ignoring nan.

    Deviations are taken from the largest sample so identical runs give an
    exactly zero width.
    """
    x = np.asarray(samples, dtype=float)
    n = np.sum(~np.isnan(x), axis=axis)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        ref = np.nanmax(x, axis=axis)
        dev = x - np.expand_dims(ref, axis)
        mdev = np.nanmean(dev, axis=axis)
        mean = ref + mdev
        var = np.nansum((dev - np.expand_dims(mdev, axis)) ** 2, axis=axis) / np.maximum(n - 1, 1)
    half = np.where(n >= 2, Z95 * np.sqrt(var) / np.sqrt(np.maximum(n, 1)), np.nan)
    return mean, half


def _one_run(args):
    config, init, horizon, grid_step = args
    report, series = run_transient(config, init, horizon, grid_step)
    return report, series


def run_ensemble(
    config: SimConfig,
    init: InitialState | None = None,
    horizon: float | None = None,
    n_runs: int = 10,
    grid_step: float | None = None,
    seeds: Sequence[int] | None = None,
    jobs: int = 1,
) -> EnsembleCurve:
    """Independent transient runs seeded ``config.seed + i``, reduced per grid point."""
    if seeds is None:
        if n_runs < 2:
            raise ConfigError(f"an ensemble needs at least 2 runs, got {n_runs}", "replications")
        seeds = [config.seed + i for i in range(n_runs)]
    elif len(seeds) < 2:
        raise ConfigError(f"an ensemble needs at least 2 runs, got {len(seeds)}", "replications")
    tasks = [(config.replace(seed=int(s)), init, horizon, grid_step) for s in seeds]
    results = map_jobs(_one_run, tasks, jobs)
    per_run = [_series_metrics(series) for _, series in results]
    t = results[0][1].t
    mean, half = {}, {}
    for name in ENSEMBLE_METRICS:
        mean[name], half[name] = mean_ci(np.stack([m[name] for m in per_run]))
    return EnsembleCurve(t, mean, half, len(seeds), [r for r, _ in results])
