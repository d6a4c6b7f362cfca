"""Desk-scale measurement rig: synthetic tasks, a planning oracle, and
scripted backends that exercise the full engine without any ML model."""

from .oracle import OracleStep, apply_step, oracle_solve
from .rules import (
    AdversarialBackend,
    PlannerNoise,
    TaskCheckerVqa,
    WellFormedBackend,
    make_rule_backend,
)
from .runner import (
    HIERARCHICAL,
    ONE_STAGE,
    BenchConfig,
    BenchMetrics,
    ConfigMetrics,
    ablation_matrix,
    corpus_path,
    load_corpus,
    measure_format_success,
    metrics_table,
    noisy_planners,
    run_benchmark,
)
from .tasks import Predicate, SyntheticTask, gen_tasks

__all__ = [
    "AdversarialBackend",
    "BenchConfig",
    "BenchMetrics",
    "ConfigMetrics",
    "HIERARCHICAL",
    "ONE_STAGE",
    "OracleStep",
    "Predicate",
    "PlannerNoise",
    "SyntheticTask",
    "TaskCheckerVqa",
    "WellFormedBackend",
    "ablation_matrix",
    "apply_step",
    "corpus_path",
    "gen_tasks",
    "load_corpus",
    "make_rule_backend",
    "measure_format_success",
    "metrics_table",
    "noisy_planners",
    "oracle_solve",
    "run_benchmark",
]
