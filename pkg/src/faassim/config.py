"""Config file (JSON or YAML) to simulator objects."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import yaml

from .analysis import CostSpec, SweepSpec
from .engine import DEFAULT_SEED, SimConfig
from .errors import ConfigError
from .parsim import ParConfig
from .stochastic import ProcessSpec, as_process
from .temporal import InitialState

SECTIONS = {
    "workload": {"arrival", "warm_service", "cold_service"},
    "platform": {"expiration_threshold", "max_concurrency", "concurrency_value"},
    "simulation": {"horizon", "skip_initial", "seed", "replications", "grid_step"},
    "cost": set(CostSpec.__dataclass_fields__),
    "initial_state": None,
    "sweep": {"axes", "replications", "budget", "common_random_numbers"},
}


@dataclass
class ConfigFile:
    sim: SimConfig
    replications: int = 1
    grid_step: float | None = None
    cost: CostSpec | None = None
    initial_state: InitialState | None = None
    sweep_doc: Mapping[str, Any] | None = None

    def sweep_spec(self) -> SweepSpec:
        if self.sweep_doc is None:
            raise ConfigError("missing required key 'sweep'", "sweep")
        doc = self.sweep_doc
        if "axes" not in doc:
            raise ConfigError("missing required key 'sweep.axes'", "sweep.axes")
        if not isinstance(doc["axes"], Mapping):
            raise ConfigError("expected a mapping of axis name to list of values", "sweep.axes")
        kwargs = {k: doc[k] for k in ("replications", "budget", "common_random_numbers") if k in doc}
        return SweepSpec(self.sim, dict(doc["axes"]), **kwargs)


def _number(value, path, *, integer=False, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, str):
        # YAML 1.1 reads "1e6" as a string
        try:
            value = float(value)
        except ValueError:
            raise ConfigError(f"expected a number, got {value!r}", path) from None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"expected a number, got {value!r}", path)
    if integer:
        if value != int(value):
            raise ConfigError(f"expected an integer, got {value!r}", path)
        return int(value)
    return value


def _section(doc, name):
    sec = doc.get(name, {})
    if sec is None:
        sec = {}
    if not isinstance(sec, Mapping):
        raise ConfigError("expected a mapping", name)
    allowed = SECTIONS[name]
    for key in sec:
        if key not in allowed:
            raise ConfigError(f"unknown key '{name}.{key}'", f"{name}.{key}")
    return sec


def _require(sec, section, key):
    if key not in sec:
        raise ConfigError(f"missing required key '{section}.{key}'", f"{section}.{key}")
    return sec[key]


def parse_config(doc: Any) -> ConfigFile:
    if not isinstance(doc, Mapping):
        raise ConfigError("config must be a mapping at the top level", "<root>")
    for key in doc:
        if key not in SECTIONS:
            raise ConfigError(f"unknown key '{key}'", key)
    if "workload" not in doc:
        raise ConfigError("missing required key 'workload'", "workload.arrival")

    wl = _section(doc, "workload")
    procs = {
        key: as_process(_require(wl, "workload", key), f"workload.{key}")
        for key in ("arrival", "warm_service", "cold_service")
    }

    pf = _section(doc, "platform")
    kwargs: dict[str, Any] = {}
    if "expiration_threshold" in pf:
        thr = pf["expiration_threshold"]
        if isinstance(thr, Mapping):
            kwargs["expiration_threshold"] = ProcessSpec.from_dict(thr, "platform.expiration_threshold")
        else:
            kwargs["expiration_threshold"] = _number(thr, "platform.expiration_threshold")
    if "max_concurrency" in pf:
        kwargs["max_concurrency"] = _number(pf["max_concurrency"], "platform.max_concurrency", integer=True, allow_none=True)
    concurrency = _number(pf.get("concurrency_value", 1), "platform.concurrency_value", integer=True)

    sim = _section(doc, "simulation")
    for key in ("horizon", "skip_initial"):
        if key in sim:
            kwargs[key] = float(_number(sim[key], f"simulation.{key}"))
    kwargs["seed"] = _number(sim.get("seed", DEFAULT_SEED), "simulation.seed", integer=True)
    replications = _number(sim.get("replications", 1), "simulation.replications", integer=True)
    if replications < 1:
        raise ConfigError(f"must be >= 1, got {replications}", "simulation.replications")
    grid_step = sim.get("grid_step")
    if grid_step is not None:
        grid_step = float(_number(grid_step, "simulation.grid_step"))

    try:
        if concurrency != 1:
            config = ParConfig(**procs, **kwargs, concurrency_value=concurrency)
        else:
            config = SimConfig(**procs, **kwargs)
    except ConfigError as exc:
        prefix = "platform" if exc.field in SECTIONS["platform"] else "simulation"
        raise ConfigError(str(exc), f"{prefix}.{exc.field}") from None

    cost = None
    if doc.get("cost") is not None:
        cs = _section(doc, "cost")
        cost = CostSpec(**{k: _number(v, f"cost.{k}") for k, v in cs.items()})

    init = None
    if doc.get("initial_state") is not None:
        init = InitialState.from_dict(doc["initial_state"])
        init.validate(config)

    sweep_doc = None
    if doc.get("sweep") is not None:
        sweep_doc = _section(doc, "sweep")

    return ConfigFile(config, replications, grid_step, cost, init, sweep_doc)


def load_document(path: str | Path) -> Any:
    path = Path(path)
    text = path.read_text()
    try:
        if path.suffix.lower() == ".json":
            return json.loads(text)
        return yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}", str(path)) from None


def load_config(path: str | Path) -> ConfigFile:
    return parse_config(load_document(path))
