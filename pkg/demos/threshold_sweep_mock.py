"""
Outlier proportion versus threshold, measured
=============================================

Runs the open-loop load generator against the bundled mock memcached with a
heavy-tailed injected delay, for several connection counts, and sweeps the
outlier threshold from 100us to 1000us. The table has the usual shape: the
proportion rises as the threshold falls. It is also written as gnuplot
blocks, one per connection count.

Takes about 15 seconds.
"""

import sys
from pathlib import Path

from tailkit import LogNormal, sweep
from tailkit.io import ReportTable, emit_plot_data
from tailkit.loadgen import MockServerConfig, MockServerProcess, WorkloadConfig, run_benchmark

US = 1_000
thresholds = [t * US for t in range(100, 1001, 100)]
connections = [1, 4, 16]
# median about 60us, a long right tail
delay = LogNormal(11.0, 0.9)

rows = []
with MockServerProcess(MockServerConfig(delay=delay, seed=1)) as server:
    for conns in connections:
        cfg = WorkloadConfig(*server.address, rate=1000, duration_s=4, warmup_s=1, connections=conns, seed=conns)
        trace = run_benchmark(cfg)
        rows.append([r.outlier_proportion for r in sweep(trace, thresholds)])
        print(f"connections={conns}: {len(trace)} requests", file=sys.stderr)

table = ReportTable("connections", "threshold_us", connections, [t // US for t in thresholds], rows)
print(table.format(digits=4), end="")

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("sweep.dat")
emit_plot_data(table, out)
print(f"plot data written to {out}")
