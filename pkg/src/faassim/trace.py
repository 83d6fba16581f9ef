"""Request logs: parameter estimation and the empirical warm-pool metrics.

The warm pool at time ``s`` is estimated as the number of distinct instances
that served a request during ``(s - window, s]``. Instances idle for longer
than ``window`` are missed, so the estimator undercounts when ``window`` is
shorter than the true expiration threshold.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from .engine import EventTrace
from .errors import ConfigError, EstimationError
from .stochastic import Empirical

CSV_HEADER = ("start_time", "response_time", "is_cold", "instance_id")
_BOOL = {"1": True, "0": False, "true": True, "false": False}


@dataclass(frozen=True)
class RequestRecord:
    start_time: float
    response_time: float
    is_cold: bool
    instance_id: str

    def __post_init__(self):
        if not self.response_time > 0:
            raise ConfigError(f"response_time must be positive, got {self.response_time!r}", "response_time")

    @property
    def end_time(self) -> float:
        return self.start_time + self.response_time


def read_records(fh: IO[str]) -> list[RequestRecord]:
    reader = csv.DictReader(fh)
    missing = [c for c in CSV_HEADER if c not in (reader.fieldnames or ())]
    if missing:
        raise ConfigError(f"request log is missing column '{missing[0]}'", missing[0])
    out = []
    for line, row in enumerate(reader, start=2):
        flag = row["is_cold"].strip().lower()
        if flag not in _BOOL:
            raise ConfigError(f"line {line}: is_cold must be one of 0/1/true/false, got {row['is_cold']!r}", "is_cold")
        try:
            out.append(RequestRecord(float(row["start_time"]), float(row["response_time"]), _BOOL[flag], row["instance_id"]))
        except ValueError as exc:
            raise ConfigError(f"line {line}: {exc}") from None
    return out


def write_records(records: Iterable[RequestRecord], fh: IO[str]):
    fh.write(",".join(CSV_HEADER) + "\n")
    for r in records:
        fh.write(f"{r.start_time!r},{r.response_time!r},{int(r.is_cold)},{r.instance_id}\n")


def records_from_events(events: EventTrace, start: float = 0.0, end: float = math.inf) -> list[RequestRecord]:
    """Pair each accepted arrival with its instance's next departure.

    Only arrivals in ``[start, end)`` are returned; rejected arrivals produce
    no record. Assumes one request per instance at a time.
    """
    pending: dict[int, tuple[float, bool]] = {}
    out = []
    for t, kind, iid in events:
        if kind == "arrival-cold" or kind == "arrival-warm":
            pending[iid] = (t, kind == "arrival-cold")
        elif kind == "departure":
            began = pending.pop(iid, None)
            if began is not None and start <= began[0] < end:
                out.append(RequestRecord(began[0], t - began[0], began[1], str(iid)))
    out.sort(key=lambda r: r.start_time)
    return out


def estimate_parameters(records: Sequence[RequestRecord]) -> dict:
    """Arrival rate and per-class response-time means and empirical processes."""
    warm = [r.response_time for r in records if not r.is_cold]
    cold = [r.response_time for r in records if r.is_cold]
    if not warm:
        raise EstimationError("no warm requests in the log; cannot estimate the warm service process")
    if not cold:
        raise EstimationError("no cold requests in the log; cannot estimate the cold service process")
    starts = [r.start_time for r in records]
    first, last = min(starts), max(starts)
    if len(records) < 2 or last <= first:
        raise EstimationError("need at least two distinct start times to estimate the arrival rate")
    return {
        "arrival_rate": (len(records) - 1) / (last - first),
        "warm_mean": math.fsum(warm) / len(warm),
        "warm_empirical": Empirical(warm),
        "cold_mean": math.fsum(cold) / len(cold),
        "cold_empirical": Empirical(cold),
    }


@dataclass
class EmpiricalMetrics:
    cold_start_probability: float
    sample_times: np.ndarray
    warm_pool_count_series: np.ndarray
    running_count_series: np.ndarray
    idle_count_series: np.ndarray
    wasted_capacity: float

    def summary(self) -> dict:
        return {
            "cold_start_probability": self.cold_start_probability,
            "avg_warm_pool_count": float(self.warm_pool_count_series.mean()),
            "avg_running_count": float(self.running_count_series.mean()),
            "avg_idle_count": float(self.idle_count_series.mean()),
            "wasted_capacity": self.wasted_capacity,
            "samples": int(self.sample_times.size),
        }

    def write_csv(self, fh: IO[str]):
        fh.write("t,warm_pool_count,running_count,idle_count\n")
        for row in zip(
            self.sample_times.tolist(),
            self.warm_pool_count_series.tolist(),
            self.running_count_series.tolist(),
            self.idle_count_series.tolist(),
        ):
            fh.write(f"{row[0]!r},{row[1]},{row[2]},{row[3]}\n")


def _covering(starts, ends, at):
    """Number of half-open intervals ``[start, end)`` containing each point of ``at``."""
    return np.searchsorted(np.sort(starts), at, side="right") - np.searchsorted(np.sort(ends), at, side="right")


def _merged(by_inst, pad):
    """Per-instance union of ``[start, end + pad)``, flattened to start and end arrays."""
    m_starts, m_ends = [], []
    for spans in by_inst.values():
        spans = sorted(spans)
        cur_s, cur_e = spans[0][0], spans[0][1] + pad
        for s, e in spans[1:]:
            if s <= cur_e:
                cur_e = max(cur_e, e + pad)
            else:
                m_starts.append(cur_s)
                m_ends.append(cur_e)
                cur_s, cur_e = s, e + pad
        m_starts.append(cur_s)
        m_ends.append(cur_e)
    return np.array(m_starts), np.array(m_ends)


def empirical_metrics(
    records: Sequence[RequestRecord],
    window: float = 600.0,
    sample_step: float = 10.0,
    start: float | None = None,
    end: float | None = None,
) -> EmpiricalMetrics:
    """Cold-start fraction plus warm-pool, running and idle counts sampled every ``sample_step``.

    The running count is the number of instances with a request in flight,
    which equals the number of in-flight requests when instances serve one
    request at a time. Samples cover ``[start, end]``, by default the first start time to the
    last completion.
    """
    if not records:
        raise EstimationError("empty request log")
    if not window > 0 or not sample_step > 0:
        raise ConfigError("window and sample_step must be positive")
    starts = np.array([r.start_time for r in records])
    ends = np.array([r.end_time for r in records])
    lo = starts.min() if start is None else start
    hi = ends.max() if end is None else end
    at = lo + np.arange(int(math.floor((hi - lo) / sample_step)) + 1) * sample_step

    by_inst: dict[str, list[tuple[float, float]]] = {}
    for r in records:
        by_inst.setdefault(r.instance_id, []).append((r.start_time, r.end_time))
    # busy instances: union of each instance's request intervals
    running = _covering(*_merged(by_inst, 0.0), at)
    # warm pool at s: instances that were serving at some point in (s - window, s]
    pool = _covering(*_merged(by_inst, window), at)

    idle = pool - running
    mean_pool = pool.mean()
    n_cold = sum(1 for r in records if r.is_cold)
    return EmpiricalMetrics(
        cold_start_probability=n_cold / len(records),
        sample_times=at,
        warm_pool_count_series=pool,
        running_count_series=running,
        idle_count_series=idle,
        wasted_capacity=float(idle.mean() / mean_pool) if mean_pool > 0 else 0.0,
    )
