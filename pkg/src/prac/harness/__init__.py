"""Experiment orchestration: configs, paired runs, transfer, reports, verification."""

from .config import DEFAULTS, ExperimentConfig
from .report import report
from .runner import SUMMARY_COLUMNS, SummaryRecord, run_experiment, run_transfer, transfer_prac
from .verify import verify

__all__ = ["DEFAULTS", "ExperimentConfig", "report", "SUMMARY_COLUMNS", "SummaryRecord",
           "run_experiment", "run_transfer", "transfer_prac", "verify"]
