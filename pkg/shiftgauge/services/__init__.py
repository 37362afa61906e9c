"""
Orchestration services for shiftgauge.

This package contains the service classes the command-line harness is
built from: running experiments, persisting their artifacts and
rendering plots.

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

from .experiment_service import CommandResult, ExperimentService, process_runner, seed_token
from .plot_service import PlotService, least_squares
from .report_service import (
    ReportService,
    RiskReport,
    RunManifest,
    artifact_stem,
    pairs_by_method,
    read_methods_report,
    seed_from_stem,
)

__all__ = [
    "CommandResult",
    "ExperimentService",
    "PlotService",
    "ReportService",
    "RiskReport",
    "RunManifest",
    "artifact_stem",
    "least_squares",
    "pairs_by_method",
    "process_runner",
    "read_methods_report",
    "seed_from_stem",
    "seed_token",
]
