"""Deadline-aware hyperparameter search scheduling, simulated."""
from .core import (
    ConfigError,
    ExperimentConfig,
    HyperparamSample,
    Rung,
    ScalingKind,
    SchedulerDecision,
    Trial,
    TrialState,
    Verdict,
    rung_milestones,
    top_k_count,
)
from .simulator import ExperimentResult, Simulation, compute_metrics, run_experiment
from .trial_model import ScalingFunction, rate, sample_hyperparams, score, step_duration

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ExperimentResult",
    "HyperparamSample",
    "Rung",
    "ScalingFunction",
    "ScalingKind",
    "SchedulerDecision",
    "Simulation",
    "Trial",
    "TrialState",
    "Verdict",
    "compute_metrics",
    "rate",
    "rung_milestones",
    "run_experiment",
    "sample_hyperparams",
    "score",
    "step_duration",
    "top_k_count",
]
