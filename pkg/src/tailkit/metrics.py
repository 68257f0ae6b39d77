"""Quality-of-service metrics over latency traces.

Outlier proportion, valid throughput, nearest-rank percentiles, mean tail
latency beyond a percentile, threshold sweeps and a log-bucketed histogram.
Every function here is pure: the trace is never modified and the same inputs
always give the same output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .trace import EmptyTraceError, LatencyTrace, Status


def _check_threshold(t_ns: int) -> int:
    if t_ns <= 0:
        raise ValueError(f"outlier threshold must be > 0 ns, got {t_ns}")
    return int(t_ns)


@dataclass(frozen=True)
class OutlierReport:
    threshold_ns: int
    n_total: int
    m_outliers: int
    n_errors: int = 0
    n_timeouts: int = 0

    @property
    def outlier_proportion(self) -> float:
        return self.m_outliers / self.n_total

    @property
    def valid_throughput(self) -> int:
        return self.n_total - self.m_outliers

    @property
    def m_slow(self) -> int:
        """Outliers caused by latency alone (status ok, latency > threshold)."""
        return self.m_outliers - self.n_errors - self.n_timeouts


def outlier_proportion(trace: LatencyTrace, t_ns: int) -> OutlierReport:
    """Count requests slower than ``t_ns`` (strictly) or not completed ok.

    Failed and timed-out requests are outliers whatever their latency; they
    are also counted separately in the report.

    >>> tr = LatencyTrace.from_latencies([50_000, 150_000, 90_000, 200_000])
    >>> outlier_proportion(tr, 100_000).outlier_proportion
    0.5
    """
    t_ns = _check_threshold(t_ns)
    trace.require_nonempty()
    not_ok = trace.status != Status.OK
    m = int(np.count_nonzero((trace.latency_ns > t_ns) | not_ok))
    return OutlierReport(
        threshold_ns=t_ns,
        n_total=len(trace),
        m_outliers=m,
        n_errors=int(np.count_nonzero(trace.status == Status.ERROR)),
        n_timeouts=int(np.count_nonzero(trace.status == Status.TIMEOUT)),
    )


def valid_throughput(trace: LatencyTrace, t_ns: int) -> int:
    """Number of requests completed ok within ``t_ns``."""
    return outlier_proportion(trace, t_ns).valid_throughput


def _check_p(p: float, *, closed_right: bool = True) -> None:
    ok = 0 < p <= 1 if closed_right else 0 < p < 1
    if not ok:
        bounds = "(0, 1]" if closed_right else "(0, 1)"
        raise ValueError(f"percentile must lie in {bounds}, got {p}")


def _rank(p: float, n: int) -> int:
    # ceil(p*n) with a guard against 0.29*100 = 28.999999999999996
    r = math.ceil(p * n - 1e-9 * max(1.0, p * n))
    return min(max(r, 1), n)


def percentile(trace: LatencyTrace, p: float) -> int:
    """Nearest-rank percentile: the ceil(p*N)-th smallest latency."""
    _check_p(p)
    trace.require_nonempty()
    k = _rank(p, len(trace)) - 1
    return int(np.partition(trace.latency_ns, k)[k])


def tail_latency(trace: LatencyTrace, n: float) -> float:
    """Mean latency of the requests ranked beyond the ``n`` percentile.

    Samples are sorted and the mean is taken over those after position
    ``floor(n * N)``, i.e. the slowest ``N - floor(n * N)`` requests. With
    ``{1, 2, 3, 4, 100}`` and ``n = 0.5`` that is the mean of ``{3, 4, 100}``.
    The set is never empty for ``n < 1``; a degenerate all-equal trace
    returns that value, which is also its maximum.
    """
    _check_p(n, closed_right=False)
    trace.require_nonempty()
    N = len(trace)
    pos = n * N
    m = min(math.floor(pos + 1e-9 * max(1.0, pos)), N - 1)
    k = max(m, 0)
    beyond = np.partition(trace.latency_ns, k)[k:] if k else trace.latency_ns
    return float(beyond.sum(dtype=np.float64) / len(beyond))


def sweep(trace: LatencyTrace, thresholds_ns) -> list[OutlierReport]:
    """One :class:`OutlierReport` per threshold, in the given order."""
    thresholds_ns = [_check_threshold(t) for t in thresholds_ns]
    if not thresholds_ns:
        raise ValueError("need at least one threshold")
    trace.require_nonempty()
    not_ok = trace.status != Status.OK
    n_err = int(np.count_nonzero(trace.status == Status.ERROR))
    n_to = int(np.count_nonzero(trace.status == Status.TIMEOUT))
    ok_sorted = np.sort(trace.latency_ns[~not_ok])
    n_bad = int(np.count_nonzero(not_ok))
    n = len(trace)
    out = []
    for t in thresholds_ns:
        slow = len(ok_sorted) - int(np.searchsorted(ok_sorted, t, side="right"))
        out.append(OutlierReport(t, n, slow + n_bad, n_err, n_to))
    return out


@dataclass(frozen=True, eq=False)
class LatencyHistogram:
    """Sparse log-bucketed histogram of integer-nanosecond latencies.

    Bucket ``i >= 1`` covers ``[ratio**(i-1), ratio**i)``; bucket 0 holds
    latencies in ``[0, 1)``. ``ratio = 1 + 2 * 10**-significant_digits`` so the
    bucket midpoint is within ``10**-significant_digits`` relative error of
    any value in the bucket.
    """

    significant_digits: int
    indices: np.ndarray
    counts: np.ndarray
    min_ns: int
    max_ns: int
    total_count: int

    @property
    def ratio(self) -> float:
        return 1.0 + 2.0 * 10.0 ** -self.significant_digits

    @property
    def relative_error(self) -> float:
        return 10.0 ** -self.significant_digits

    def bucket_edges(self, index: int) -> tuple[float, float]:
        if index == 0:
            return 0.0, 1.0
        return self.ratio ** (index - 1), self.ratio**index

    def bucket_value(self, index: int) -> float:
        lo, hi = self.bucket_edges(index)
        return 0.0 if index == 0 else (lo + hi) / 2

    def percentile(self, p: float) -> float:
        """Nearest-rank percentile reconstructed from bucket counts."""
        _check_p(p)
        rank = _rank(p, self.total_count)
        i = int(np.searchsorted(np.cumsum(self.counts), rank))
        v = self.bucket_value(int(self.indices[i]))
        return min(max(v, self.min_ns), self.max_ns)


def _bucket_index(values: np.ndarray, ratio: float) -> np.ndarray:
    v = values.astype(np.float64)
    idx = np.zeros(len(v), dtype=np.int64)
    pos = v >= 1
    log_r = math.log(ratio)
    raw = np.floor(np.log(v[pos]) / log_r).astype(np.int64) + 1
    # fix float rounding at bucket edges so ratio**(i-1) <= v < ratio**i holds
    lo = np.power(ratio, raw - 1)
    raw = np.where(v[pos] < lo, raw - 1, raw)
    hi = np.power(ratio, raw)
    raw = np.where(v[pos] >= hi, raw + 1, raw)
    idx[pos] = raw
    return idx


def build_histogram(trace: LatencyTrace, significant_digits: int = 3) -> LatencyHistogram:
    if not (isinstance(significant_digits, (int, np.integer)) and 1 <= significant_digits <= 5):
        raise ValueError(f"significant_digits must be an integer in 1..5, got {significant_digits!r}")
    trace.require_nonempty()
    ratio = 1.0 + 2.0 * 10.0 ** -significant_digits
    idx, counts = np.unique(_bucket_index(trace.latency_ns, ratio), return_counts=True)
    return LatencyHistogram(
        significant_digits=int(significant_digits),
        indices=idx,
        counts=counts.astype(np.int64),
        min_ns=int(trace.latency_ns.min()),
        max_ns=int(trace.latency_ns.max()),
        total_count=len(trace),
    )


__all__ = [
    "EmptyTraceError",
    "LatencyHistogram",
    "OutlierReport",
    "build_histogram",
    "outlier_proportion",
    "percentile",
    "sweep",
    "tail_latency",
    "valid_throughput",
]
