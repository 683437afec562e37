"""Event-driven performance and energy simulation of photonic BNN accelerators."""

from .config import (BUILTIN_VARIANTS, AcceleratorConfig, PeripheralParams, build_config,
                     dump_config_file, load_config_file)
from .engine import EVENT_KINDS, Engine, OverlapAudit, Resource, SimEvent, audit_trace
from .report import CSV_HEADER, ComparisonReport, compare, metrics_csv, read_metrics_csv
from .simulator import Metrics, SimulationResult, run_layer, run_network, simulate_layer, simulate_network

__all__ = [
    "BUILTIN_VARIANTS", "AcceleratorConfig", "PeripheralParams", "build_config",
    "dump_config_file", "load_config_file", "EVENT_KINDS", "Engine", "OverlapAudit",
    "Resource", "SimEvent", "audit_trace", "CSV_HEADER", "ComparisonReport", "compare",
    "metrics_csv", "read_metrics_csv", "Metrics", "SimulationResult", "run_layer",
    "run_network", "simulate_layer", "simulate_network",
]
