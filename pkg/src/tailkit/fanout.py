"""Monte Carlo simulation of one-round root-to-leaf fan-out requests.

Each trial fans a root request out to ``sc * k`` sub-requests. A sub-request
runs on ``replicas`` servers and takes the fastest; with ``reissue_delay_ns``
set, a further copy is sent if the first answer is still missing after the
delay. The root answers once every sub-request has (zero merge overhead), so
the service latency is the maximum of the sub-request latencies.

Random streams are derived from ``(seed, block_index)`` for fixed-size blocks
of trials, so results do not depend on how many workers run the blocks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .distributions import LatencyDistribution
from .trace import LatencyTrace, TailkitError

BLOCK_TRIALS = 1 << 15
BLOCK_LEAF_SAMPLES = 1 << 22


class SimulationError(TailkitError):
    pass


@dataclass(frozen=True)
class FanoutConfig:
    sc: int = 1
    k: int = 1
    replicas: int = 1
    reissue_delay_ns: int | None = None
    slowdown_probability: float = 0.0
    slowdown_multiplier: float = 1.0
    trials: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("sc", "k", "replicas", "trials"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {v}")
        if self.reissue_delay_ns is not None and self.reissue_delay_ns < 0:
            raise ValueError("reissue delay must be >= 0")
        if not (0.0 <= self.slowdown_probability < 1.0):
            raise ValueError("slowdown_probability must lie in [0, 1)")
        if not (self.slowdown_multiplier >= 1.0) or not math.isfinite(self.slowdown_multiplier):
            raise ValueError("slowdown_multiplier must be >= 1")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must fit in 64 unsigned bits")

    @property
    def fanout(self) -> int:
        return self.sc * self.k


@dataclass(frozen=True, eq=False)
class SimulationResult:
    config: FanoutConfig
    trace: LatencyTrace
    extra_replicas: np.ndarray  # reissued copies sent, per trial

    def __eq__(self, other):
        if not isinstance(other, SimulationResult):
            return NotImplemented
        return (
            self.config == other.config
            and self.trace == other.trace
            and np.array_equal(self.extra_replicas, other.extra_replicas)
        )

    @property
    def replicas_sent(self) -> np.ndarray:
        """Total sub-request copies sent per trial."""
        base = self.config.fanout * self.config.replicas
        return base + self.extra_replicas


@dataclass(frozen=True)
class BlockOutcome:
    service_ns: np.ndarray  # (trials,)
    leaf_ns: np.ndarray  # (trials, fanout) effective sub-request latencies
    extra_replicas: np.ndarray  # (trials,)


def simulate_block(
    cfg: FanoutConfig, dist: LatencyDistribution, rng: np.random.Generator, n_trials: int
) -> BlockOutcome:
    """Simulate ``n_trials`` requests, keeping the per-sub-request latencies.

    Draw order is fixed (slowdown events, first copies, reissued copies) so two
    configs that differ only in reissue settings see identical first copies
    under the same generator state.
    """
    n = cfg.fanout
    slowed = rng.random(n_trials) < cfg.slowdown_probability
    first = dist.sample_many(rng, (n_trials, n, cfg.replicas))
    mult = np.where(slowed, cfg.slowdown_multiplier, 1.0)[:, None]
    if cfg.slowdown_probability > 0:
        first = np.rint(first * mult[:, :, None]).astype(np.int64)
    leaf = first.min(axis=2)
    extra = np.zeros(n_trials, dtype=np.int64)
    if cfg.reissue_delay_ns is not None:
        second = dist.sample_many(rng, (n_trials, n))
        if cfg.slowdown_probability > 0:
            second = np.rint(second * mult).astype(np.int64)
        late = leaf > cfg.reissue_delay_ns
        leaf = np.where(late, np.minimum(leaf, cfg.reissue_delay_ns + second), leaf)
        extra = late.sum(axis=1).astype(np.int64)
    return BlockOutcome(leaf.max(axis=1), leaf, extra)


def simulate_request(cfg: FanoutConfig, dist: LatencyDistribution, rng: np.random.Generator) -> int:
    """Service latency of one fan-out request."""
    return int(simulate_block(cfg, dist, rng, 1).service_ns[0])


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def block_trials(cfg: FanoutConfig) -> int:
    """Trials per random-stream block; a function of the config only."""
    return max(1, min(BLOCK_TRIALS, BLOCK_LEAF_SAMPLES // (cfg.fanout * cfg.replicas)))


def run_simulation(cfg: FanoutConfig, dist: LatencyDistribution, workers: int = 1) -> SimulationResult:
    """Run ``cfg.trials`` trials; output is identical for any ``workers``."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    per_block = block_trials(cfg)
    n_blocks = -(-cfg.trials // per_block)

    def one(b: int):
        size = min(per_block, cfg.trials - b * per_block)
        out = simulate_block(cfg, dist, block_rng(cfg.seed, b), size)
        return out.service_ns, out.extra_replicas

    try:
        if workers == 1 or n_blocks == 1:
            parts = [one(b) for b in range(n_blocks)]
        else:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                parts = list(ex.map(one, range(n_blocks)))
    except MemoryError as e:
        raise SimulationError(
            f"out of memory simulating {cfg.trials} trials of fan-out {cfg.fanout}; no results kept"
        ) from e
    service = np.concatenate([p[0] for p in parts])
    extra = np.concatenate([p[1] for p in parts])
    trace = LatencyTrace.from_latencies(service)
    return SimulationResult(cfg, trace, extra)
