"""Outlier proportion, fan-out amplification and tail-latency measurement."""

from .amplification import (
    AmplificationParams,
    OutlierRatio,
    reduction_factor,
    required_single_server_outlier,
    service_outlier,
    service_outlier_virtualized,
)
from .distributions import (
    BernoulliSplit,
    Constant,
    Empirical,
    Exponential,
    LatencyDistribution,
    LogNormal,
    Pareto,
    fit_empirical,
    parse_distribution,
)
from .fanout import FanoutConfig, SimulationResult, run_simulation, simulate_request
from .metrics import (
    LatencyHistogram,
    OutlierReport,
    build_histogram,
    outlier_proportion,
    percentile,
    sweep,
    tail_latency,
    valid_throughput,
)
from .trace import EmptyTraceError, LatencyRecord, LatencyTrace, Status, TailkitError, parse_duration

__version__ = "0.1.0"
