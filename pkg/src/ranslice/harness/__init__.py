"""Experiment orchestration: configs, runs, summaries, sweeps and scenario events."""

from .config import ExperimentConfig, dump_config, load_config
from .events import (Event, WEIGHT_CASES, inject_event, parse_event, perturb_weights,
                     perturbation_specs, weights_case)
from .metrics import (SCHEMA_VERSION, Summary, format_table, metrics_columns, metrics_row,
                      read_metrics, summarize, table_csv)
from .runner import HarnessError, RunResult, build_scenario, make_policy, run_experiment
from .sweep import SWEEP_PARAMS, SweepRow, format_sweep, sweep

__all__ = [
    "Event", "ExperimentConfig", "HarnessError", "RunResult", "SCHEMA_VERSION",
    "SWEEP_PARAMS", "Summary", "SweepRow", "WEIGHT_CASES", "build_scenario", "dump_config",
    "format_sweep", "format_table", "inject_event", "load_config", "make_policy",
    "metrics_columns", "metrics_row", "parse_event", "perturb_weights", "perturbation_specs",
    "read_metrics", "run_experiment", "summarize", "sweep", "table_csv", "weights_case",
]
