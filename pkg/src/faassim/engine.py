"""Scale-per-request event loop.

Each arrival is routed to the newest idle instance, or spawns a new instance
(cold start) while the number of busy instances is below the maximum
concurrency level, or is rejected. Idle instances terminate after being idle
for the expiration threshold.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field, fields, replace
from heapq import heappop, heappush
from typing import IO, NamedTuple

import numpy as np

from .errors import ConfigError, InstanceStateError, SimulationError
from .instance import FunctionInstance, InstanceState
from .stochastic import Deterministic, ProcessSpec, RngStream

DEFAULT_SEED = 1

# event kinds double as the tie-break rank for simultaneous events
DEPARTURE, EXPIRATION, ARRIVAL = 0, 1, 2

COLD, WARM, REJECTED = 0, 1, 2
ARRIVAL_KINDS = ("arrival-cold", "arrival-warm", "arrival-rejected")

_IDLE = InstanceState.IDLE
_RUNNING = InstanceState.RUNNING


@dataclass(frozen=True)
class SimConfig:
    """Immutable input of one simulation run.

    ``expiration_threshold`` is either a number of seconds or a process from
    which each new instance draws its own threshold. ``max_concurrency=None``
    means unbounded.
    """

    arrival: ProcessSpec
    warm_service: ProcessSpec
    cold_service: ProcessSpec
    expiration_threshold: float | ProcessSpec = 600.0
    max_concurrency: int | None = 1000
    horizon: float = 1e6
    skip_initial: float = 0.0
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        for name in ("arrival", "warm_service", "cold_service"):
            if not isinstance(getattr(self, name), ProcessSpec):
                raise ConfigError(f"{name} must be a ProcessSpec, got {getattr(self, name)!r}", name)
        thr = self.expiration_threshold
        if isinstance(thr, Deterministic):
            thr = thr.value
        if not isinstance(thr, ProcessSpec):
            if isinstance(thr, bool) or not isinstance(thr, (int, float)) or not (0 < thr < math.inf):
                raise ConfigError(f"must be positive, got {thr!r}", "expiration_threshold")
            thr = float(thr)
        object.__setattr__(self, "expiration_threshold", thr)
        mc = self.max_concurrency
        if mc is not None:
            if isinstance(mc, bool) or not isinstance(mc, (int, np.integer)) or mc < 1:
                raise ConfigError(f"must be an integer >= 1 or unbounded, got {mc!r}", "max_concurrency")
            object.__setattr__(self, "max_concurrency", int(mc))
        for name in ("horizon", "skip_initial"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"must be a finite number, got {v!r}", name)
            object.__setattr__(self, name, float(v))
        if self.skip_initial < 0:
            raise ConfigError(f"must be >= 0, got {self.skip_initial!r}", "skip_initial")
        if not self.horizon > self.skip_initial:
            raise ConfigError(
                f"horizon ({self.horizon!r}) must exceed skip_initial ({self.skip_initial!r})", "horizon"
            )
        seed = self.seed
        if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not 0 <= seed < 2**64:
            raise ConfigError(f"must be a 64-bit unsigned integer, got {seed!r}", "seed")
        object.__setattr__(self, "seed", int(seed))

    def replace(self, **changes) -> SimConfig:
        return replace(self, **changes)


@dataclass
class SimReport:
    cold_start_probability: float
    rejection_probability: float
    avg_server_count: float
    avg_running_count: float
    avg_idle_count: float
    avg_lifespan: float
    instance_count_histogram: dict[int, float]
    requests_total: int
    requests_cold: int
    requests_warm: int
    requests_rejected: int
    avg_utilization: float
    avg_wasted_capacity: float

    def to_dict(self) -> dict:
        """JSON-ready mapping; nan becomes None and histogram keys become strings."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "instance_count_histogram":
                v = {str(k): v[k] for k in sorted(v)}
            elif isinstance(v, float) and math.isnan(v):
                v = None
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> SimReport:
        doc = dict(doc)
        doc["instance_count_histogram"] = {int(k): v for k, v in doc["instance_count_histogram"].items()}
        for f in fields(cls):
            if doc.get(f.name) is None:
                doc[f.name] = math.nan
        return cls(**doc)

    def scalars(self) -> dict[str, float]:
        d = asdict(self)
        del d["instance_count_histogram"]
        return d


class TraceRecord(NamedTuple):
    time: float
    kind: str
    instance_id: int


class EventTrace(list):
    """Ordered ``(time, kind, instance_id)`` records of one run.

    Rejected arrivals carry ``instance_id = -1``.
    """

    HEADER = ("time", "kind", "instance_id")

    def write_csv(self, fh: IO[str], header: bool = True):
        if header:
            fh.write(",".join(self.HEADER) + "\n")
        for t, kind, iid in self:
            fh.write(f"{t!r},{kind},{iid}\n")

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    @classmethod
    def read_csv(cls, fh: IO[str]) -> EventTrace:
        out = cls()
        for row in csv.DictReader(fh):
            out.append(TraceRecord(float(row["time"]), row["kind"], int(row["instance_id"])))
        return out


@dataclass
class GridSeries:
    """State sampled on a time grid (piecewise-constant, right-continuous)."""

    t: np.ndarray
    server_count: np.ndarray
    running_count: np.ndarray
    avg_server_count: np.ndarray
    arrivals: np.ndarray
    cold_starts: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def idle_count(self) -> np.ndarray:
        return self.server_count - self.running_count

    @property
    def cold_start_probability(self) -> np.ndarray:
        """Cold-start fraction of arrivals in ``(t[i-1], t[i]]``; nan for empty buckets."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.arrivals > 0, self.cold_starts / np.maximum(self.arrivals, 1), np.nan)


class ServerlessSimulator:
    """Runs one simulation of :class:`SimConfig`.

    Parameters
    ----------
    config : SimConfig
    initial_state : optional
        Object with an ``instances`` list of snapshots (see
        :class:`faassim.temporal.InitialState`) used to pre-populate the warm pool.
    grid : array-like, optional
        Sorted times at which the instance counts are sampled.
    record_trace : bool
        Keep an :class:`EventTrace` of every processed event.
    """

    instance_class = FunctionInstance

    def __init__(self, config: SimConfig, initial_state=None, grid=None, record_trace=False):
        self.config = config
        self.initial_state = initial_state
        self.grid = None if grid is None else np.asarray(grid, dtype=float)
        if self.grid is not None and self.grid.size and np.any(np.diff(self.grid) < 0):
            raise ConfigError("grid must be sorted", "grid")
        self.record_trace = record_trace
        self.rng = RngStream(config.seed)
        self.instances: dict[int, FunctionInstance] = {}
        self.server_count = 0
        self.running_count = 0
        self.trace: EventTrace | None = EventTrace() if record_trace else None
        self.series: GridSeries | None = None
        self._events: list = []
        self._idle: list[int] = []
        self._next_id = 0
        mc = config.max_concurrency
        self._max_busy = math.inf if mc is None else mc
        self._threshold_process = (
            config.expiration_threshold if isinstance(config.expiration_threshold, ProcessSpec) else None
        )

    # -- helpers -----------------------------------------------------------------

    def _threshold(self):
        if self._threshold_process is None:
            return self.config.expiration_threshold
        return self._threshold_process.sample(self.rng)

    def _new_id(self):
        iid = self._next_id
        self._next_id += 1
        return iid

    def _seed_initial(self):
        if self.initial_state is None:
            return
        snaps = sorted(enumerate(self.initial_state.instances), key=lambda p: (p[1].creation_time_offset, p[0]))
        for _, snap in snaps:
            inst = self.instance_class(self._new_id(), float(snap.creation_time_offset), self._threshold())
            self._add_snapshot(inst, snap)

    def _add_snapshot(self, inst, snap):
        events = self._events
        self.instances[inst.id] = inst
        self.server_count += 1
        if snap.state == "busy":
            inst.state = _RUNNING
            inst.busy_until = float(snap.remaining_busy)
            self.running_count += 1
            heappush(events, (inst.busy_until, DEPARTURE, inst.id, 0))
        else:
            inst.idle_since = -float(snap.time_in_state)
            inst.served_count = 1
            heappush(events, (max(inst.expires_at, 0.0), EXPIRATION, inst.id, inst.version))
            heappush(self._idle, -inst.id)

    # -- event handlers -------------------------------------------------------

    def _on_arrival(self, t):
        """Route a request; returns ``(outcome, instance_id)``."""
        idle = self._idle
        instances = self.instances
        while idle:
            inst = instances.get(-heappop(idle))
            if inst is not None and inst.state is _IDLE:
                inst.assign_warm(t, self.config.warm_service.sample(self.rng))
                heappush(self._events, (inst.busy_until, DEPARTURE, inst.id, 0))
                self.running_count += 1
                return WARM, inst.id
        if self.running_count < self._max_busy:
            cold = self.config.cold_service.sample(self.rng)
            inst = self.instance_class.create_cold(t, cold, self._threshold(), self._new_id())
            instances[inst.id] = inst
            heappush(self._events, (inst.busy_until, DEPARTURE, inst.id, 0))
            self.server_count += 1
            self.running_count += 1
            return COLD, inst.id
        return REJECTED, -1

    def _on_departure(self, t, iid, tag):
        inst = self.instances[iid]
        expires = inst.complete(t)
        self.running_count -= 1
        heappush(self._events, (expires, EXPIRATION, iid, inst.version))
        heappush(self._idle, -iid)

    def _on_expiration(self, t, iid, version):
        """Terminate an instance; returns its lifespan, or None for a stale event."""
        inst = self.instances.get(iid)
        if inst is None or inst.version != version:
            return None
        inst.terminate(t)
        del self.instances[iid]
        self.server_count -= 1
        return inst.lifespan

    # -- main loop --------------------------------------------------------------

    def run(self) -> tuple[SimReport, EventTrace | None]:
        try:
            return self._run()
        except InstanceStateError as exc:
            raise SimulationError(self._dump(exc)) from exc

    def _dump(self, exc):
        lines = [f"simulation aborted: {exc}"]
        if self.trace:
            lines.append("last events:")
            lines.extend(f"  {r.time!r},{r.kind},{r.instance_id}" for r in self.trace[-20:])
        lines.append(f"live instances ({len(self.instances)}):")
        lines.extend(f"  {inst!r}" for inst in list(self.instances.values())[:20])
        return "\n".join(lines)

    def _run(self):
        cfg = self.config
        horizon, skip = cfg.horizon, cfg.skip_initial
        events = self._events
        arrival = cfg.arrival
        rng = self.rng
        trace = self.trace
        on_arrival, on_departure, on_expiration = self._on_arrival, self._on_departure, self._on_expiration

        self._seed_initial()
        heappush(events, (arrival.sample(rng), ARRIVAL, 0, 0))

        grid = self.grid
        ng = 0 if grid is None else grid.size
        gi = 0
        if ng:
            g_server = np.zeros(ng)
            g_running = np.zeros(ng)
            g_avg = np.zeros(ng)
            g_arrivals = np.zeros(ng, dtype=np.int64)
            g_cold = np.zeros(ng, dtype=np.int64)
            grid_list = grid.tolist()

        counts = [0, 0, 0]
        lifespan_sum = 0.0
        lifespan_n = 0
        area_server = 0.0
        area_running = 0.0
        hist: dict[int, float] = {}
        last = 0.0

        while events:
            ev = events[0]
            t = ev[0]
            if t >= horizon:
                break
            heappop(events)
            if gi < ng and grid_list[gi] < t:
                gi = self._sample_grid(grid_list, gi, t, last, skip, area_server, g_server, g_running, g_avg)
            if t > last:
                if t > skip:
                    dt = t - (last if last > skip else skip)
                    n = self.server_count
                    area_server += n * dt
                    area_running += self.running_count * dt
                    hist[n] = hist.get(n, 0.0) + dt
                last = t
            kind = ev[1]
            if kind == ARRIVAL:
                outcome, iid = on_arrival(t)
                if t >= skip:
                    counts[outcome] += 1
                if gi < ng:
                    g_arrivals[gi] += 1
                    if outcome == COLD:
                        g_cold[gi] += 1
                if trace is not None:
                    trace.append(TraceRecord(t, ARRIVAL_KINDS[outcome], iid))
                heappush(events, (t + arrival.sample(rng), ARRIVAL, 0, 0))
            elif kind == DEPARTURE:
                on_departure(t, ev[2], ev[3])
                if trace is not None:
                    trace.append(TraceRecord(t, "departure", ev[2]))
            else:
                span = on_expiration(t, ev[2], ev[3])
                if span is not None:
                    if t >= skip:
                        lifespan_sum += span
                        lifespan_n += 1
                    if trace is not None:
                        trace.append(TraceRecord(t, "expiration", ev[2]))

        if gi < ng:
            self._sample_grid(grid_list, gi, math.inf, last, skip, area_server, g_server, g_running, g_avg)
        lo = last if last > skip else skip
        if horizon > lo:
            dt = horizon - lo
            n = self.server_count
            area_server += n * dt
            area_running += self.running_count * dt
            hist[n] = hist.get(n, 0.0) + dt

        if trace is not None:
            # departures of requests still in flight, so every accepted request has an end
            while events:
                ev = heappop(events)
                if ev[1] == DEPARTURE:
                    trace.append(TraceRecord(ev[0], "departure", ev[2]))

        if ng:
            self.series = GridSeries(grid.copy(), g_server, g_running, g_avg, g_arrivals, g_cold)
        return self._report(counts, area_server, area_running, hist, lifespan_sum, lifespan_n), trace

    def _sample_grid(self, grid, gi, t, last, skip, area_server, g_server, g_running, g_avg):
        """Record the current state at every grid point before ``t``; returns the next index."""
        n = self.server_count
        r = self.running_count
        lo = last if last > skip else skip
        ng = len(grid)
        while gi < ng and grid[gi] < t:
            g = grid[gi]
            g_server[gi] = n
            g_running[gi] = r
            if g > skip:
                g_avg[gi] = (area_server + n * max(g - lo, 0.0)) / (g - skip)
            else:
                g_avg[gi] = n
            gi += 1
        return gi

    def _report(self, counts, area_server, area_running, hist, lifespan_sum, lifespan_n):
        span = self.config.horizon - self.config.skip_initial
        cold, warm, rejected = counts
        total = cold + warm + rejected
        avg_server = area_server / span
        avg_running = area_running / span
        avg_idle = (area_server - area_running) / span
        return SimReport(
            cold_start_probability=cold / total if total else 0.0,
            rejection_probability=rejected / total if total else 0.0,
            avg_server_count=avg_server,
            avg_running_count=avg_running,
            avg_idle_count=avg_idle,
            avg_lifespan=lifespan_sum / lifespan_n if lifespan_n else math.nan,
            instance_count_histogram={k: hist[k] / span for k in sorted(hist)},
            requests_total=total,
            requests_cold=cold,
            requests_warm=warm,
            requests_rejected=rejected,
            avg_utilization=avg_running / avg_server if avg_server > 0 else 0.0,
            avg_wasted_capacity=avg_idle / avg_server if avg_server > 0 else 0.0,
        )


def run(config: SimConfig, record_trace: bool = False) -> tuple[SimReport, EventTrace | None]:
    """Steady-state run from an empty system."""
    return ServerlessSimulator(config, record_trace=record_trace).run()


def instance_count_distribution(report: SimReport) -> dict[int, float]:
    """Fraction of measured time spent with exactly ``k`` live instances."""
    hist = report.instance_count_histogram
    if not hist:
        return {0: 1.0}
    return {k: hist[k] for k in sorted(hist)}
