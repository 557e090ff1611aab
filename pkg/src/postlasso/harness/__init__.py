"""Simulation harness: synthetic designs, rejection oracle, metrics, runner."""

from .data import DESIGNS, Dataset, DesignSpec, a0_preset, covariance, generate_dataset
from .experiment import (ExperimentConfig, ExperimentResult, load_config,
                         parse_config, run_experiment, run_replicate)
from .metrics import DatasetRecord, SetRecord, SimulationReport, compute_metrics
from .oracle import OracleResult, mh_marginals, rejection_oracle

__all__ = [
    "DESIGNS", "Dataset", "DesignSpec", "a0_preset", "covariance",
    "generate_dataset", "ExperimentConfig", "ExperimentResult", "load_config",
    "parse_config", "run_experiment", "run_replicate", "DatasetRecord",
    "SetRecord", "SimulationReport", "compute_metrics", "OracleResult",
    "mh_marginals", "rejection_oracle",
]
