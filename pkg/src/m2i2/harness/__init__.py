"""Experiment harness: configs, training/eval loops, metrics, exports, plots."""

from .config import RunConfig, load_config, parse_flat_config, resolve_env_config
from .metrics import MetricsRecord, comm_efficiency, read_metrics
from .runner import evaluate_checkpoint, evaluate_policy, train

__all__ = [
    "MetricsRecord",
    "RunConfig",
    "comm_efficiency",
    "evaluate_checkpoint",
    "evaluate_policy",
    "load_config",
    "parse_flat_config",
    "read_metrics",
    "resolve_env_config",
    "train",
]
