"""Deterministic single-process simulator for federated optimization."""
from .methods import METHODS, MethodConfig
from .orchestrator import (
    DataConfig,
    ExperimentConfig,
    ModelConfig,
    RoundMetrics,
    build_federation,
    rounds_to_target,
    run_experiment,
    run_seed,
)

__version__ = "0.1.0"

__all__ = [
    "METHODS",
    "DataConfig",
    "ExperimentConfig",
    "MethodConfig",
    "ModelConfig",
    "RoundMetrics",
    "build_federation",
    "rounds_to_target",
    "run_experiment",
    "run_seed",
]
