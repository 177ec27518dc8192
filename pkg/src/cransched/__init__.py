"""Interference-aware uplink scheduling for multi-cell C-RAN."""
from .engine import ExperimentConfig, RunMetrics, run_experiment, run_replication
from .geometry import SystemParams, Topology, generate_drop
from .matching import Assignment, greedy_match, hungarian_max

__all__ = [
    "Assignment",
    "ExperimentConfig",
    "RunMetrics",
    "SystemParams",
    "Topology",
    "generate_drop",
    "greedy_match",
    "hungarian_max",
    "run_experiment",
    "run_replication",
]
__version__ = "0.1.0"
