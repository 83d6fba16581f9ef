"""Seeded random variates for arrival, service and expiration processes.

A process is an immutable description of a distribution over positive
durations. New distributions are added by subclassing :class:`ProcessSpec`
and implementing :meth:`ProcessSpec.sample` and :meth:`ProcessSpec.mean`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Any, ClassVar, Mapping, Sequence

import numpy as np

from .errors import ConfigError

# bias of the untruncated gaussian mean becomes noticeable past this ratio
GAUSSIAN_BIAS_RATIO = 0.25


class RngStream:
    """Single-owner random stream backed by numpy's PCG64.

    Draws are served from per-primitive blocks so that scalar sampling stays
    cheap inside the event loop. The sequence of values returned for a given
    sequence of calls depends only on ``seed``.
    """

    def __init__(self, seed: int, block_size: int = 4096):
        seed = int(seed)
        if seed < 0 or seed >= 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed}", "seed")
        self.seed = seed
        self.block_size = block_size
        self._gen = np.random.Generator(np.random.PCG64(seed))
        self._exp: list[float] = []
        self._norm: list[float] = []
        self._unif: list[float] = []

    def standard_exponential(self) -> float:
        buf = self._exp
        if not buf:
            buf.extend(self._gen.standard_exponential(self.block_size)[::-1].tolist())
        return buf.pop()

    def standard_normal(self) -> float:
        buf = self._norm
        if not buf:
            buf.extend(self._gen.standard_normal(self.block_size)[::-1].tolist())
        return buf.pop()

    def uniform(self) -> float:
        """Uniform draw on [0, 1)."""
        buf = self._unif
        if not buf:
            buf.extend(self._gen.random(self.block_size)[::-1].tolist())
        return buf.pop()


class ProcessSpec:
    """Base class of duration distributions.

    Subclasses are frozen dataclasses registered under a ``kind`` name so they
    can be built from ``{"kind": ..., "params": {...}}`` documents.
    """

    kind: ClassVar[str] = ""
    _registry: ClassVar[dict[str, type[ProcessSpec]]] = {}

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        if cls.kind:
            ProcessSpec._registry[cls.kind] = cls

    def sample(self, rng: RngStream) -> float:
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def params(self) -> dict[str, Any]:
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "params": self.params()}

    @staticmethod
    def from_dict(doc: Mapping[str, Any], path: str = "process") -> ProcessSpec:
        """Build a process from ``{"kind": ..., "params": {...}}``."""
        if not isinstance(doc, Mapping):
            raise ConfigError("expected a mapping with 'kind' and 'params'", path)
        extra = set(doc) - {"kind", "params"}
        if extra:
            raise ConfigError(f"unknown key '{path}.{sorted(extra)[0]}'", f"{path}.{sorted(extra)[0]}")
        if "kind" not in doc:
            raise ConfigError(f"missing required key '{path}.kind'", f"{path}.kind")
        kind = doc["kind"]
        cls = ProcessSpec._registry.get(kind)
        if cls is None:
            raise ConfigError(
                f"unknown process kind {kind!r} (expected one of {sorted(ProcessSpec._registry)})",
                f"{path}.kind",
            )
        params = doc.get("params", {})
        if not isinstance(params, Mapping):
            raise ConfigError("params must be a mapping", f"{path}.params")
        return cls._from_params(dict(params), f"{path}.params")

    @classmethod
    def _from_params(cls, params: dict, path: str) -> ProcessSpec:
        names = {f.name for f in fields(cls)}
        for key in params:
            if key not in names:
                raise ConfigError(f"unknown key '{path}.{key}'", f"{path}.{key}")
        for key in names:
            if key not in params:
                raise ConfigError(f"missing required key '{path}.{key}'", f"{path}.{key}")
        try:
            return cls(**params)
        except ConfigError as exc:
            raise ConfigError(str(exc), f"{path}.{exc.field}" if exc.field else path) from None


def _positive(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}", name)
    if not math.isfinite(value) or value <= 0:
        raise ConfigError(f"{name} must be positive and finite, got {value!r}", name)
    return float(value)


@dataclass(frozen=True)
class Exponential(ProcessSpec):
    """Exponential durations with the given ``rate`` (1/seconds)."""

    rate: float
    kind: ClassVar[str] = "exponential"

    def __post_init__(self):
        object.__setattr__(self, "rate", _positive(self.rate, "rate"))

    @classmethod
    def from_mean(cls, mean: float) -> Exponential:
        return cls(1.0 / _positive(mean, "mean"))

    @classmethod
    def _from_params(cls, params, path):
        # `mean` is accepted as an alternative to `rate`
        if "mean" in params and "rate" not in params:
            mean = params.pop("mean")
            if params:
                key = sorted(params)[0]
                raise ConfigError(f"unknown key '{path}.{key}'", f"{path}.{key}")
            try:
                return cls.from_mean(mean)
            except ConfigError:
                raise ConfigError(f"mean must be positive and finite, got {mean!r}", f"{path}.mean") from None
        return super()._from_params(params, path)

    def sample(self, rng):
        return rng.standard_exponential() / self.rate

    def mean(self):
        return 1.0 / self.rate

    def params(self):
        return {"rate": self.rate}


@dataclass(frozen=True)
class Deterministic(ProcessSpec):
    """Every draw equals ``value``."""

    value: float
    kind: ClassVar[str] = "deterministic"

    def __post_init__(self):
        object.__setattr__(self, "value", _positive(self.value, "value"))

    def sample(self, rng):
        return self.value

    def mean(self):
        return self.value

    def params(self):
        return {"value": self.value}


@dataclass(frozen=True)
class Gaussian(ProcessSpec):
    """Normal durations truncated to (0, inf) by rejection.

    :meth:`mean` reports the untruncated mean; check :attr:`truncation_biased`
    before relying on it.
    """

    mu: float
    sigma: float
    kind: ClassVar[str] = "gaussian"

    def __post_init__(self):
        object.__setattr__(self, "mu", _positive(self.mu, "mean"))
        std = self.sigma
        if isinstance(std, bool) or not isinstance(std, (int, float)) or not math.isfinite(std) or std < 0:
            raise ConfigError(f"std must be a non-negative number, got {std!r}", "std")
        object.__setattr__(self, "sigma", float(std))

    @classmethod
    def _from_params(cls, params, path):
        for key in params:
            if key not in ("mean", "std"):
                raise ConfigError(f"unknown key '{path}.{key}'", f"{path}.{key}")
        for key in ("mean", "std"):
            if key not in params:
                raise ConfigError(f"missing required key '{path}.{key}'", f"{path}.{key}")
        try:
            return cls(params["mean"], params["std"])
        except ConfigError as exc:
            raise ConfigError(str(exc), f"{path}.{exc.field}") from None

    @property
    def truncation_biased(self) -> bool:
        return self.sigma / self.mu > GAUSSIAN_BIAS_RATIO

    def sample(self, rng):
        while True:
            x = self.mu + self.sigma * rng.standard_normal()
            if x > 0:
                return x

    def mean(self):
        return self.mu

    def params(self):
        return {"mean": self.mu, "std": self.sigma}


@dataclass(frozen=True)
class Empirical(ProcessSpec):
    """Bootstrap resampling (uniform, with replacement) from observed durations."""

    samples: tuple[float, ...]
    kind: ClassVar[str] = "empirical"

    def __post_init__(self):
        if isinstance(self.samples, (str, bytes, Mapping)) or not isinstance(self.samples, (Sequence, np.ndarray)):
            raise ConfigError("samples must be a list of positive durations", "samples")
        if len(self.samples) == 0:
            raise ConfigError("samples must not be empty", "samples")
        values = tuple(_positive(v.item() if isinstance(v, np.generic) else v, "samples") for v in self.samples)
        object.__setattr__(self, "samples", values)

    def sample(self, rng):
        return self.samples[int(rng.uniform() * len(self.samples))]

    def mean(self):
        return math.fsum(self.samples) / len(self.samples)

    def params(self):
        return {"samples": list(self.samples)}


def sample(spec: ProcessSpec, rng: RngStream) -> float:
    return spec.sample(rng)


def mean(spec: ProcessSpec) -> float:
    return spec.mean()


def as_process(value: Any, path: str = "process") -> ProcessSpec:
    """Coerce a number (deterministic) or a ``{kind, params}`` mapping to a process."""
    if isinstance(value, ProcessSpec):
        return value
    if isinstance(value, Mapping):
        return ProcessSpec.from_dict(value, path)
    try:
        return Deterministic(value)
    except ConfigError as exc:
        raise ConfigError(str(exc).replace("value", "duration"), path) from None
