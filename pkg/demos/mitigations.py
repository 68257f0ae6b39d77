"""
Replicas and reissued requests
==============================

Two ways to cut the fan-out tail: send every sub-request to r replicas and
keep the fastest, or send a second copy only when the first is still
outstanding after a delay. Replication multiplies load by r; reissue costs
only the copies that were actually sent.
"""

from tailkit import FanoutConfig, Pareto, outlier_proportion, percentile, run_simulation

US = 1_000
dist = Pareto(20 * US, 1.5)  # heavy-tailed leaf latency
base = dict(sc=50, trials=100_000, seed=3)

runs = {
    "plain": FanoutConfig(**base),
    "2 replicas": FanoutConfig(**base, replicas=2),
    "3 replicas": FanoutConfig(**base, replicas=3),
    "reissue after 60us": FanoutConfig(**base, reissue_delay_ns=60 * US),
    "reissue after 150us": FanoutConfig(**base, reissue_delay_ns=150 * US),
}

print(f"{'strategy':<22}{'p50':>10}{'p99':>10}{'op(1ms)':>10}{'copies/request':>16}")
for name, cfg in runs.items():
    res = run_simulation(cfg, dist)
    tr = res.trace
    print(
        f"{name:<22}{percentile(tr, 0.5) / US:>8.0f}us{percentile(tr, 0.99) / US:>8.0f}us"
        f"{outlier_proportion(tr, 1000 * US).outlier_proportion:>10.4f}{res.replicas_sent.mean():>16.1f}"
    )

# Reissue reuses the first copies drawn by the plain run (same seed), so it
# can only help each request, never hurt it.
plain = run_simulation(runs["plain"], dist).trace.latency_ns
hedged = run_simulation(runs["reissue after 60us"], dist).trace.latency_ns
print(f"\nrequests slower with reissue: {(hedged > plain).sum()}  faster: {(hedged < plain).sum()}")
