"""
Monte Carlo fan-out against the closed form
===========================================

The closed form assumes leaves are independent. The simulator makes no such
assumption, so it can check the formula where it holds and show where it
breaks: a single slowdown event that hits every leaf of a request at once.
"""

import math

from tailkit import BernoulliSplit, Constant, FanoutConfig, outlier_proportion, run_simulation, service_outlier

US = 1_000
TRIALS = 200_000

# Leaves answer in 50us, except a fraction op that take 200us. With a 100us
# deadline, op is exactly the per-leaf outlier proportion.
print(" op     sc   simulated  closed form  |diff|/sigma")
for op in (0.001, 0.01, 0.05):
    for sc in (1, 10, 100):
        cfg = FanoutConfig(sc=sc, trials=TRIALS, seed=sc)
        res = run_simulation(cfg, BernoulliSplit(50 * US, 200 * US, op))
        sim = outlier_proportion(res.trace, 100 * US).outlier_proportion
        exact = float(service_outlier(op, sc))
        sigma = math.sqrt(exact * (1 - exact) / TRIALS) or 1.0
        print(f"{op:<6} {sc:>4}   {sim:.5f}    {exact:.5f}      {abs(sim - exact) / sigma:.2f}")
print()

# Now every leaf is fast, but 5% of requests hit a slowdown that multiplies
# every leaf latency by 100. Independent leaves would give 0 outliers; the
# correlated event gives 5% whatever the fan-out.
for sc in (1, 10, 100):
    cfg = FanoutConfig(sc=sc, trials=TRIALS, seed=7, slowdown_probability=0.05, slowdown_multiplier=100)
    res = run_simulation(cfg, Constant(50 * US))
    p = outlier_proportion(res.trace, 1000 * US).outlier_proportion
    print(f"correlated slowdown, sc={sc:>3}: outlier proportion {p:.4f}")
