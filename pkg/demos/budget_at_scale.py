"""
How small must a single server's outlier proportion be?
========================================================

A root request that fans out to many leaves is late whenever any leaf is
late. This demo walks the closed form both ways: from a per-server outlier
proportion to the service-level one, and from a service-level target back
to the per-server budget.
"""

from tailkit import (
    reduction_factor,
    required_single_server_outlier,
    service_outlier,
    service_outlier_virtualized,
)

# A server that misses its deadline 1% of the time looks healthy on its own.
# Fan a request out to 100 of them and most requests are late.
for sc in (1, 10, 100, 1000):
    print(f"op=0.01  sc={sc:>5}  service outlier proportion = {service_outlier(0.01, sc):.5f}")
print()

# Packing k guests or containers on each server multiplies the fan-out.
for k in (1, 2, 4, 8):
    print(f"op=0.001 sc=1000 k={k}  service outlier proportion = {service_outlier_virtualized(0.001, 1000, k):.5f}")
print()

# Inverting: to keep 90% of requests on time across 10,000 leaves, each leaf
# may be late only about once in 95,000 requests.
for sc in (100, 1000, 10_000):
    budget = required_single_server_outlier(0.10, sc)
    print(f"target 10%  sc={sc:>6}  per-server budget = {budget:.4g}  (1 in {1 / budget:,.0f})")
print()

# A node measured at 9.09% would have to improve by this much.
for target in (0.10, 0.05, 0.01):
    print(f"measured 9.09%, sc=1000, target {target:.0%}: reduce {reduction_factor(0.0909, target, 1000):,.1f}x")
