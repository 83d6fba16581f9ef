"""Instances that serve up to ``concurrency_value`` requests at once.

Scaling follows the scale-per-request rule: a request goes to the newest
instance with spare capacity, otherwise a new instance is created (cold
start) subject to the maximum concurrency level, otherwise it is rejected.
Request durations do not depend on how many requests share an instance.
"""
from __future__ import annotations

from dataclasses import dataclass
from heapq import heappop, heappush

import numpy as np

from .engine import COLD, DEPARTURE, EXPIRATION, REJECTED, WARM, ServerlessSimulator, SimConfig, SimReport
from .errors import ConfigError, InstanceStateError
from .instance import FunctionInstance, InstanceState

_IDLE = InstanceState.IDLE
_RUNNING = InstanceState.RUNNING
_INITIALIZING = InstanceState.INITIALIZING


@dataclass(frozen=True)
class ParConfig(SimConfig):
    concurrency_value: int = 1

    def __post_init__(self):
        super().__post_init__()
        c = self.concurrency_value
        if isinstance(c, bool) or not isinstance(c, (int, np.integer)) or c < 1:
            raise ConfigError(f"must be an integer >= 1, got {c!r}", "concurrency_value")
        object.__setattr__(self, "concurrency_value", int(c))

    @classmethod
    def from_sim_config(cls, config: SimConfig, concurrency_value: int) -> ParConfig:
        fields = {k: getattr(config, k) for k in SimConfig.__dataclass_fields__}
        return cls(**fields, concurrency_value=concurrency_value)


class ParFunctionInstance(FunctionInstance):
    """Instance with a request counter; idle iff nothing is in flight."""

    __slots__ = ("in_flight", "capacity")

    def __init__(self, id, creation_time, expiration_threshold, capacity=1):
        super().__init__(id, creation_time, expiration_threshold)
        self.in_flight = 0
        self.capacity = capacity

    @classmethod
    def create_cold(cls, now, cold_duration, threshold, id=0, capacity=1):
        inst = super().create_cold(now, cold_duration, threshold, id)
        inst.in_flight = 1
        inst.capacity = capacity
        return inst

    def accept(self, now, duration):
        """Take one more request; returns the time it completes."""
        if self.state is _IDLE:
            if now < self.idle_since or now >= self.idle_since + self.expiration_threshold:
                raise InstanceStateError(f"request at t={now!r} outside idle window of {self!r}")
            self.state = _RUNNING
            self.version += 1
        elif self.in_flight >= self.capacity or self.state is InstanceState.TERMINATED:
            raise InstanceStateError(f"instance {self!r} cannot take another request ({self.in_flight} in flight)")
        self.in_flight += 1
        return now + duration

    def release(self, now, cold=False):
        """One request finished; returns the termination time if the instance went idle."""
        if self.in_flight <= 0:
            raise InstanceStateError(f"release on instance {self!r} with nothing in flight")
        self.in_flight -= 1
        self.served_count += 1
        if cold:
            self.is_cold_serving = False
            if self.state is _INITIALIZING:
                self.state = _RUNNING
        if self.in_flight:
            return None
        self.state = _IDLE
        self.idle_since = now
        return now + self.expiration_threshold


class ParServerlessSimulator(ServerlessSimulator):
    """Event loop of :class:`ServerlessSimulator` with per-instance concurrency.

    ``running_count`` counts instances with at least one request in flight.
    """

    instance_class = ParFunctionInstance

    def __init__(self, config: ParConfig, initial_state=None, grid=None, record_trace=False):
        if not isinstance(config, ParConfig):
            config = ParConfig.from_sim_config(config, 1)
        super().__init__(config, initial_state=initial_state, grid=grid, record_trace=record_trace)
        self.capacity = config.concurrency_value
        self.requests_in_flight = 0

    def _add_snapshot(self, inst, snap):
        inst.capacity = self.capacity
        self.instances[inst.id] = inst
        self.server_count += 1
        if snap.state == "busy":
            inst.state = _RUNNING
            inst.in_flight = 1
            inst.busy_until = float(snap.remaining_busy)
            self.running_count += 1
            self.requests_in_flight += 1
            heappush(self._events, (inst.busy_until, DEPARTURE, inst.id, 0))
            if self.capacity > 1:
                heappush(self._idle, -inst.id)
        else:
            inst.idle_since = -float(snap.time_in_state)
            inst.served_count = 1
            heappush(self._events, (max(inst.expires_at, 0.0), EXPIRATION, inst.id, inst.version))
            heappush(self._idle, -inst.id)

    def _on_arrival(self, t):
        # self._idle holds every live instance with spare capacity, newest first
        avail = self._idle
        instances = self.instances
        while avail:
            inst = instances.get(-avail[0])
            if inst is None:
                heappop(avail)
                continue
            was_idle = inst.in_flight == 0
            done = inst.accept(t, self.config.warm_service.sample(self.rng))
            if inst.in_flight >= self.capacity:
                heappop(avail)
            heappush(self._events, (done, DEPARTURE, inst.id, 0))
            if was_idle:
                self.running_count += 1
            self.requests_in_flight += 1
            return WARM, inst.id
        if self.running_count < self._max_busy:
            cold = self.config.cold_service.sample(self.rng)
            inst = ParFunctionInstance.create_cold(t, cold, self._threshold(), self._new_id(), self.capacity)
            instances[inst.id] = inst
            heappush(self._events, (inst.busy_until, DEPARTURE, inst.id, 1))
            if self.capacity > 1:
                heappush(avail, -inst.id)
            self.server_count += 1
            self.running_count += 1
            self.requests_in_flight += 1
            return COLD, inst.id
        return REJECTED, -1

    def _on_departure(self, t, iid, tag):
        inst = self.instances[iid]
        was_full = inst.in_flight >= self.capacity
        expires = inst.release(t, cold=bool(tag))
        self.requests_in_flight -= 1
        if was_full:
            heappush(self._idle, -iid)
        if expires is not None:
            self.running_count -= 1
            heappush(self._events, (expires, EXPIRATION, iid, inst.version))


def run_par(config: ParConfig, record_trace: bool = False) -> tuple[SimReport, object]:
    """Steady-state run with concurrent requests per instance."""
    return ParServerlessSimulator(config, record_trace=record_trace).run()
