"""Latency traces: the per-request records every analysis consumes."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple

import numpy as np


class TailkitError(Exception):
    """Base class for errors raised by this package."""


class EmptyTraceError(TailkitError, ValueError):
    """An operation needs at least one record and got none."""


class Status(enum.IntEnum):
    OK = 0
    ERROR = 1
    TIMEOUT = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, text: str) -> "Status":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown status {text!r}") from None


class LatencyRecord(NamedTuple):
    send_ns: int
    latency_ns: int
    status: Status = Status.OK


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LatencyTrace:
    """Immutable, send-time-ordered collection of request records.

    Columns are stored as read-only int64 / uint8 numpy arrays so traces of
    millions of records stay cheap to analyze and to pass between threads.
    """

    send_ns: np.ndarray
    latency_ns: np.ndarray
    status: np.ndarray

    def __post_init__(self):
        send = np.ascontiguousarray(self.send_ns, dtype=np.int64).reshape(-1)
        lat = np.ascontiguousarray(self.latency_ns, dtype=np.int64).reshape(-1)
        st = np.ascontiguousarray(self.status, dtype=np.uint8).reshape(-1)
        if not (len(send) == len(lat) == len(st)):
            raise ValueError("trace columns differ in length")
        if len(lat) and lat.min() < 0:
            raise ValueError("latencies must be >= 0")
        if len(send) > 1 and np.any(np.diff(send) < 0):
            raise ValueError("records must be non-decreasing by send time")
        if len(st) and st.max() > max(Status):
            raise ValueError("unknown status code in trace")
        object.__setattr__(self, "send_ns", _frozen(send.copy()))
        object.__setattr__(self, "latency_ns", _frozen(lat.copy()))
        object.__setattr__(self, "status", _frozen(st.copy()))

    @classmethod
    def from_records(cls, records: Iterable[LatencyRecord | tuple]) -> "LatencyTrace":
        rows = [LatencyRecord(*r) for r in records]
        if not rows:
            return cls.empty()
        send, lat, st = zip(*rows)
        return cls(np.array(send), np.array(lat), np.array([int(s) for s in st]))

    @classmethod
    def from_latencies(cls, latencies, status=None, send_ns=None) -> "LatencyTrace":
        """Build a trace from latencies alone; send times default to 0, 1, 2, ..."""
        lat = np.asarray(latencies, dtype=np.int64).reshape(-1)
        if send_ns is None:
            send_ns = np.arange(len(lat), dtype=np.int64)
        if status is None:
            status = np.zeros(len(lat), dtype=np.uint8)
        return cls(send_ns, lat, status)

    @classmethod
    def empty(cls) -> "LatencyTrace":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z.astype(np.uint8))

    @classmethod
    def merge(cls, traces: Iterable["LatencyTrace"]) -> "LatencyTrace":
        """Concatenate traces and stable-sort by send time."""
        traces = list(traces)
        if not traces:
            return cls.empty()
        send = np.concatenate([t.send_ns for t in traces])
        order = np.argsort(send, kind="stable")
        return cls(
            send[order],
            np.concatenate([t.latency_ns for t in traces])[order],
            np.concatenate([t.status for t in traces])[order],
        )

    def __len__(self) -> int:
        return len(self.latency_ns)

    @property
    def n_total(self) -> int:
        return len(self)

    def __iter__(self) -> Iterator[LatencyRecord]:
        for s, l, st in zip(self.send_ns.tolist(), self.latency_ns.tolist(), self.status.tolist()):
            yield LatencyRecord(s, l, Status(st))

    def __getitem__(self, i: int) -> LatencyRecord:
        return LatencyRecord(int(self.send_ns[i]), int(self.latency_ns[i]), Status(int(self.status[i])))

    def __eq__(self, other) -> bool:
        if not isinstance(other, LatencyTrace):
            return NotImplemented
        return (
            np.array_equal(self.send_ns, other.send_ns)
            and np.array_equal(self.latency_ns, other.latency_ns)
            and np.array_equal(self.status, other.status)
        )

    def __repr__(self) -> str:
        return f"LatencyTrace(n={len(self)})"

    @property
    def ok(self) -> np.ndarray:
        return self.status == Status.OK

    def require_nonempty(self) -> None:
        if len(self) == 0:
            raise EmptyTraceError("trace has no records")


_UNITS = {"ns": 1, "us": 1_000, "µs": 1_000, "ms": 1_000_000, "s": 1_000_000_000}
_DURATION_RE = re.compile(r"^\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*(ns|us|µs|ms|s)?\s*$")


def parse_duration(text: str, default_unit: str | None = None) -> int:
    """Parse ``"100us"``, ``"1.5ms"``, ``"2s"`` into integer nanoseconds.

    A bare number is accepted only when ``default_unit`` is given.
    """
    m = _DURATION_RE.match(str(text))
    if not m:
        raise ValueError(f"cannot parse duration {text!r}")
    value, unit = m.groups()
    if unit is None:
        if default_unit is None:
            raise ValueError(f"duration {text!r} needs a unit suffix (ns/us/ms/s)")
        unit = default_unit
    return int(round(float(value) * _UNITS[unit]))


def format_duration(ns: float) -> str:
    for unit, scale in (("s", 1e9), ("ms", 1e6), ("us", 1e3)):
        if abs(ns) >= scale:
            return f"{ns / scale:.6g}{unit}"
    return f"{ns:.6g}ns"
