"""Sampleable leaf-latency models, all in integer nanoseconds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .trace import LatencyTrace, parse_duration


class LatencyDistribution:
    """Base class. Subclasses implement :meth:`_draw` returning float ns."""

    def _draw(self, rng: np.random.Generator, size) -> np.ndarray:
        raise NotImplementedError

    def sample_many(self, rng: np.random.Generator, size) -> np.ndarray:
        x = self._draw(rng, size)
        return np.maximum(np.rint(x), 0).astype(np.int64)

    def sample(self, rng: np.random.Generator) -> int:
        return int(self.sample_many(rng, 1)[0])

    def to_spec(self) -> str:
        """The ``kind:args`` string :func:`parse_distribution` reads back."""
        raise NotImplementedError


def _positive(name, v):
    if not (v > 0) or not math.isfinite(v):
        raise ValueError(f"{name} must be finite and > 0, got {v}")


@dataclass(frozen=True)
class Constant(LatencyDistribution):
    value_ns: int

    def __post_init__(self):
        if self.value_ns < 0:
            raise ValueError(f"constant latency must be >= 0, got {self.value_ns}")

    def _draw(self, rng, size):
        return np.full(size, float(self.value_ns))

    def to_spec(self):
        return f"constant:{int(self.value_ns)}ns"


@dataclass(frozen=True)
class Exponential(LatencyDistribution):
    mean_ns: float

    def __post_init__(self):
        _positive("mean", self.mean_ns)

    def _draw(self, rng, size):
        return rng.exponential(self.mean_ns, size)

    def to_spec(self):
        return f"exp:{self.mean_ns!r}ns"


@dataclass(frozen=True)
class LogNormal(LatencyDistribution):
    """``exp(N(log_mean, log_sigma))`` nanoseconds."""

    log_mean: float
    log_sigma: float

    def __post_init__(self):
        _positive("log_sigma", self.log_sigma)
        if not math.isfinite(self.log_mean):
            raise ValueError("log_mean must be finite")

    def _draw(self, rng, size):
        return rng.lognormal(self.log_mean, self.log_sigma, size)

    def to_spec(self):
        return f"lognormal:{self.log_mean!r},{self.log_sigma!r}"


@dataclass(frozen=True)
class Pareto(LatencyDistribution):
    """Classical Pareto: support ``[scale_ns, inf)``, tail index ``shape``."""

    scale_ns: float
    shape: float

    def __post_init__(self):
        _positive("scale", self.scale_ns)
        _positive("shape", self.shape)

    def _draw(self, rng, size):
        return self.scale_ns * (1.0 + rng.pareto(self.shape, size))

    def to_spec(self):
        return f"pareto:{self.scale_ns!r}ns,{self.shape!r}"


@dataclass(frozen=True)
class BernoulliSplit(LatencyDistribution):
    """``slow_ns`` with probability ``slow_probability``, else ``fast_ns``."""

    fast_ns: int
    slow_ns: int
    slow_probability: float

    def __post_init__(self):
        _positive("fast value", self.fast_ns)
        _positive("slow value", self.slow_ns)
        if not (0.0 <= self.slow_probability <= 1.0):
            raise ValueError(f"slow_probability must lie in [0, 1], got {self.slow_probability}")

    def _draw(self, rng, size):
        slow = rng.random(size) < self.slow_probability
        return np.where(slow, float(self.slow_ns), float(self.fast_ns))

    def to_spec(self):
        return f"split:{int(self.fast_ns)}ns,{int(self.slow_ns)}ns,{self.slow_probability!r}"


@dataclass(frozen=True, eq=False)
class Empirical(LatencyDistribution):
    """Resamples a trace's latencies uniformly with replacement."""

    trace: LatencyTrace

    def __post_init__(self):
        if len(self.trace) == 0:
            raise ValueError("empirical distribution needs a non-empty trace")

    def sample_many(self, rng, size):
        idx = rng.integers(0, len(self.trace), size)
        return self.trace.latency_ns[idx]

    def to_spec(self):
        raise ValueError("an empirical distribution has no inline spec; write its trace to a file")


def fit_empirical(trace: LatencyTrace) -> Empirical:
    trace.require_nonempty()
    return Empirical(trace)


def parse_distribution(text: str) -> LatencyDistribution:
    """Parse a ``kind:args`` spec.

    ``constant:1ms``, ``exp:200us``, ``lognormal:MU,SIGMA`` (of ln ns),
    ``pareto:SCALE,SHAPE``, ``split:FAST,SLOW,P``, ``empirical:trace.csv``.
    """
    kind, sep, arg = text.partition(":")
    if not sep:
        raise ValueError(f"distribution {text!r} must look like kind:args")
    kind = kind.strip().lower()
    parts = [p.strip() for p in arg.split(",")]

    def need(n):
        if len(parts) != n:
            raise ValueError(f"{kind} distribution takes {n} argument(s), got {arg!r}")

    if kind == "constant":
        need(1)
        return Constant(parse_duration(parts[0]))
    if kind in ("exp", "exponential"):
        need(1)
        return Exponential(parse_duration(parts[0]))
    if kind == "lognormal":
        need(2)
        return LogNormal(float(parts[0]), float(parts[1]))
    if kind == "pareto":
        need(2)
        return Pareto(parse_duration(parts[0]), float(parts[1]))
    if kind == "split":
        need(3)
        return BernoulliSplit(parse_duration(parts[0]), parse_duration(parts[1]), float(parts[2]))
    if kind == "empirical":
        from .io import read_trace

        return fit_empirical(read_trace(Path(arg)))
    raise ValueError(f"unknown distribution kind {kind!r}")
