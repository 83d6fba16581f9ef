"""Function instance lifecycle: initializing/running -> idle -> terminated."""
from __future__ import annotations

import enum
import math

from .errors import InstanceStateError


class InstanceState(enum.Enum):
    INITIALIZING = "initializing"
    RUNNING = "running"
    IDLE = "idle"
    TERMINATED = "terminated"


BUSY_STATES = (InstanceState.INITIALIZING, InstanceState.RUNNING)


class FunctionInstance:
    """A single function instance serving one request at a time.

    A cold start is one busy interval covering provisioning and service; the
    instance is labelled ``INITIALIZING`` during it. ``version`` changes every
    time a pending expiration is invalidated, so schedulers can discard stale
    expiration events lazily.
    """

    __slots__ = (
        "id",
        "creation_time",
        "state",
        "busy_until",
        "idle_since",
        "expiration_threshold",
        "served_count",
        "is_cold_serving",
        "termination_time",
        "version",
    )

    def __init__(self, id, creation_time, expiration_threshold):
        if not expiration_threshold > 0:
            raise InstanceStateError(f"expiration threshold must be positive, got {expiration_threshold}")
        self.id = id
        self.creation_time = creation_time
        self.expiration_threshold = expiration_threshold
        self.state = InstanceState.IDLE
        self.busy_until = math.nan
        self.idle_since = math.nan
        self.served_count = 0
        self.is_cold_serving = False
        self.termination_time = math.nan
        self.version = 0

    def __repr__(self):
        return (
            f"FunctionInstance(id={self.id}, state={self.state.value}, created={self.creation_time!r}, "
            f"busy_until={self.busy_until!r}, idle_since={self.idle_since!r})"
        )

    @classmethod
    def create_cold(cls, now, cold_duration, threshold, id=0):
        """New instance already serving the request that triggered its creation."""
        if not cold_duration > 0:
            raise InstanceStateError(f"cold duration must be positive, got {cold_duration}")
        inst = cls(id, now, threshold)
        inst.state = InstanceState.INITIALIZING
        inst.busy_until = now + cold_duration
        inst.is_cold_serving = True
        return inst

    @property
    def is_busy(self):
        return self.state is InstanceState.RUNNING or self.state is InstanceState.INITIALIZING

    @property
    def expires_at(self):
        """Scheduled termination time while idle, otherwise nan."""
        if self.state is InstanceState.IDLE:
            return self.idle_since + self.expiration_threshold
        return math.nan

    @property
    def lifespan(self):
        return self.termination_time - self.creation_time

    def assign_warm(self, now, warm_duration):
        if self.state is not InstanceState.IDLE:
            raise InstanceStateError(f"warm assignment to non-idle instance {self!r} at t={now!r}")
        if now < self.idle_since or now >= self.idle_since + self.expiration_threshold:
            raise InstanceStateError(f"warm assignment at t={now!r} outside idle window of {self!r}")
        self.state = InstanceState.RUNNING
        self.busy_until = now + warm_duration
        self.is_cold_serving = False
        self.version += 1

    def complete(self, now):
        """Finish the current request; returns the scheduled termination time."""
        if not self.is_busy:
            raise InstanceStateError(f"completion of non-busy instance {self!r} at t={now!r}")
        if now != self.busy_until:
            raise InstanceStateError(f"completion at t={now!r} but {self!r} is busy until {self.busy_until!r}")
        self.state = InstanceState.IDLE
        self.idle_since = now
        self.served_count += 1
        self.is_cold_serving = False
        return now + self.expiration_threshold

    def terminate(self, now):
        if self.state is not InstanceState.IDLE:
            raise InstanceStateError(f"termination of non-idle instance {self!r} at t={now!r}")
        if now != self.idle_since + self.expiration_threshold:
            raise InstanceStateError(f"termination at t={now!r} before {self!r} expired")
        self.state = InstanceState.TERMINATED
        self.termination_time = now
        self.version += 1
