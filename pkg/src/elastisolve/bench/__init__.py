"""Benchmark harness: case definitions, runs, sweeps, CSV records and reports."""

from .cases import CASE_NAMES, DEFAULT_PARAMS, CaseSpec, build_preconditioner, build_problem
from .config import load_config, nonlinear_config, parse_config
from .harness import SWEEP_AXES, run_case, sweep
from .records import CSV_COLUMNS, RunRecord, read_csv, write_csv
from .report import emit_report

__all__ = [
    "CASE_NAMES", "DEFAULT_PARAMS", "CaseSpec", "build_preconditioner", "build_problem",
    "load_config", "nonlinear_config", "parse_config", "SWEEP_AXES", "run_case", "sweep",
    "CSV_COLUMNS", "RunRecord", "read_csv", "write_csv", "emit_report",
]
