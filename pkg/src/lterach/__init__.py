"""LTE contention-based random access simulator with collision-resolution trees."""
from .core import DeviceClass, PreamblePool
from .engine import Scenario, run, run_batch, simulate
from .metrics import MetricsRecord, summarize
from .traffic import TrafficModel

__all__ = [
    "DeviceClass", "MetricsRecord", "PreamblePool", "Scenario", "TrafficModel",
    "run", "run_batch", "simulate", "summarize",
]
