"""Discrete-event simulator for scale-per-request serverless platforms."""

__version__ = "0.1.0"

from .analysis import CostSpec, SweepSpec, estimate_cost, simulate, sweep
from .engine import EventTrace, ServerlessSimulator, SimConfig, SimReport, instance_count_distribution, run
from .errors import ConfigError, EstimationError, InstanceStateError, SimulationError
from .instance import FunctionInstance, InstanceState
from .parsim import ParConfig, ParServerlessSimulator, run_par
from .stochastic import Deterministic, Empirical, Exponential, Gaussian, ProcessSpec, RngStream
from .temporal import EnsembleCurve, InitialState, InstanceSnapshot, run_ensemble, run_transient
from .trace import RequestRecord, empirical_metrics, estimate_parameters, records_from_events

__all__ = [
    "ConfigError",
    "CostSpec",
    "Deterministic",
    "Empirical",
    "EnsembleCurve",
    "EstimationError",
    "EventTrace",
    "Exponential",
    "FunctionInstance",
    "Gaussian",
    "InitialState",
    "InstanceSnapshot",
    "InstanceState",
    "InstanceStateError",
    "ParConfig",
    "ParServerlessSimulator",
    "ProcessSpec",
    "RequestRecord",
    "RngStream",
    "ServerlessSimulator",
    "SimConfig",
    "SimReport",
    "SimulationError",
    "SweepSpec",
    "empirical_metrics",
    "estimate_cost",
    "estimate_parameters",
    "instance_count_distribution",
    "records_from_events",
    "run",
    "run_ensemble",
    "run_par",
    "run_transient",
    "simulate",
    "sweep",
]
