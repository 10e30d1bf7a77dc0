"""Online changepoint detection with a recycled geometric grid of candidate lags.

Each detector keeps ``O(log t)`` cumulative summaries and, at every time
``t``, tests a two-sample statistic for each lag in the grid.
"""

from __future__ import annotations

__version__ = "0.1.0"

from gridcpd.calibration import CalibrationReport, CalibrationSpec, calibrate, calibrate_chad
from gridcpd.detectors import (
    Decision,
    DetectorConfig,
    ExpFamModel,
    OnlineDetector,
    gaussian_model,
    poisson_model,
    run_to_alarm,
    scan,
    scan_first_alarm,
)
from gridcpd.errors import (
    AlarmStateError,
    ChangepointError,
    ConfigError,
    DegenerateInputError,
    DomainError,
    GridLookupError,
    NumericError,
    ParseError,
)
from gridcpd.grid import dynamic_grid, full_grid, static_grid
from gridcpd.simharness import StreamSpec, benchmark_costs, estimate_delay, gen_stream
from gridcpd.summaries import PrefixStore, SummaryRing

__all__ = [
    "AlarmStateError",
    "CalibrationReport",
    "CalibrationSpec",
    "ChangepointError",
    "ConfigError",
    "Decision",
    "DegenerateInputError",
    "DetectorConfig",
    "DomainError",
    "ExpFamModel",
    "GridLookupError",
    "NumericError",
    "OnlineDetector",
    "ParseError",
    "PrefixStore",
    "StreamSpec",
    "SummaryRing",
    "benchmark_costs",
    "calibrate",
    "calibrate_chad",
    "dynamic_grid",
    "estimate_delay",
    "full_grid",
    "gaussian_model",
    "gen_stream",
    "poisson_model",
    "run_to_alarm",
    "scan",
    "scan_first_alarm",
    "static_grid",
]
