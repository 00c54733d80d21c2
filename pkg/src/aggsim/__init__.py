"""Simulator and protocol library for averaging-based distributed aggregation."""

from .core import AggregateFunction, ConfigError, MassPair, read_estimate
from .engine import FaultPlan, Mode, Simulator
from .topology import Topology, generate_erdos_renyi

__all__ = [
    "AggregateFunction",
    "ConfigError",
    "FaultPlan",
    "MassPair",
    "Mode",
    "Simulator",
    "Topology",
    "generate_erdos_renyi",
    "read_estimate",
]

__version__ = "0.1.0"
