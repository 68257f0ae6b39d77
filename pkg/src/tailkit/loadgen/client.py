"""Open-loop memcached load generator.

Request ``k`` is scheduled at ``start + k / rate`` no matter when earlier
responses arrive, and its latency is measured from that scheduled time. A
send that goes out late (a busy connection, a slow wakeup) is still sent and
the lateness is charged to the request, which is what keeps the measurement
free of coordinated omission.

Requests are dealt round-robin to ``connections`` sockets. Each socket is
owned by one thread. Without pipelining a connection carries one request at
a time; with ``pipeline=True`` it sends on schedule and matches replies in
order.
"""

from __future__ import annotations

import gc
import math
import select
import socket
import threading
import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from ..trace import LatencyTrace, Status, TailkitError
from . import protocol as mc

# Harness overhead (client scheduling + loopback + mock server) on an otherwise
# idle machine. The median request pays at most HARNESS_OVERHEAD_BOUND_NS on
# top of its injected delay, and at most HARNESS_EXCEEDANCE_BOUND of requests
# are pushed past 1 ms by overhead alone (OS wakeup jitter on small VMs).
# Checked by a calibration run in tests/test_loadgen.py.
HARNESS_OVERHEAD_BOUND_NS = 1_000_000
HARNESS_EXCEEDANCE_BOUND = 0.02


class BenchmarkError(TailkitError):
    """Run aborted. ``partial`` holds what was recorded, flagged invalid."""

    def __init__(self, message: str, partial: LatencyTrace | None = None):
        super().__init__(message)
        self.partial = partial
        self.valid = False


def parse_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host or not port.isdigit() or not (0 <= int(port) < 65536):
        raise ValueError(f"address must look like host:port, got {text!r}")
    return host.strip("[]"), int(port)


@dataclass(frozen=True)
class WorkloadConfig:
    host: str
    port: int
    rate: float
    duration_s: float
    warmup_s: float = 0.0
    connections: int = 16
    get_fraction: float = 0.9
    key_count: int = 1000
    value_size: int = 32
    request_timeout_ns: int = 1_000_000_000
    seed: int = 0
    pipeline: bool = False

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ValueError("target rate must be > 0")
        if self.connections < 1:
            raise ValueError("connections must be >= 1")
        if not (self.duration_s > 0):
            raise ValueError("duration must be > 0")
        if not (0 <= self.warmup_s < self.duration_s):
            raise ValueError("warmup must satisfy 0 <= warmup < duration")
        if not (0.0 <= self.get_fraction <= 1.0):
            raise ValueError("get_fraction must lie in [0, 1]")
        if self.key_count < 1 or self.value_size < 1:
            raise ValueError("key_count and value_size must be >= 1")
        if self.request_timeout_ns <= 0:
            raise ValueError("request timeout must be > 0")

    @property
    def n_requests(self) -> int:
        return math.ceil(self.rate * self.duration_s - 1e-9)

    @property
    def first_recorded(self) -> int:
        return math.ceil(self.rate * self.warmup_s - 1e-9)

    def offset_ns(self, k: int) -> int:
        """Scheduled send time of request ``k`` relative to run start."""
        return int(k * 1e9 / self.rate)


class _Abort(Exception):
    pass


class _Connection:
    """One socket and the requests queued on or in flight over it."""

    def __init__(self, cfg: WorkloadConfig, index: int):
        self.cfg = cfg
        self.index = index
        self.rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(index,)))
        self.value = b"v" * cfg.value_size
        self.sock: socket.socket | None = None
        self.reader = mc.ResponseReader()
        self.backlog: deque[tuple[int, int]] = deque()  # scheduled but not yet sent
        self.outstanding: deque[tuple[int, int]] = deque()  # (k, scheduled ns)

    def connect(self) -> None:
        try:
            s = socket.create_connection((self.cfg.host, self.cfg.port), timeout=5)
        except OSError as e:
            raise BenchmarkError(f"cannot connect to {self.cfg.host}:{self.cfg.port}: {e}") from e
        s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        s.settimeout(None)
        self.sock = s
        self.reader = mc.ResponseReader()

    def close(self) -> None:
        if self.sock is not None:
            self.sock.close()
            self.sock = None

    def reconnect(self) -> None:
        self.close()
        self.connect()

    def next_command(self) -> bytes:
        key = b"key:%d" % int(self.rng.integers(self.cfg.key_count))
        if self.rng.random() < self.cfg.get_fraction:
            return mc.encode_command(mc.Get(key))
        return mc.encode_command(mc.Set(key, 0, 0, self.value))

    def pump(self) -> None:
        """Send queued requests the connection is allowed to carry now."""
        while self.backlog and (self.cfg.pipeline or not self.outstanding):
            item = self.backlog.popleft()
            self.sock.sendall(self.next_command())
            self.outstanding.append(item)


class _Worker:
    """Owns a subset of the connections and drives them from one thread."""

    def __init__(self, cfg: WorkloadConfig, conns: list[_Connection], start_ns: int, abort: threading.Event):
        self.cfg = cfg
        self.conns = conns
        self.by_sock: dict[socket.socket, _Connection] = {}
        self.start_ns = start_ns
        self.abort = abort
        self.records: list[tuple[int, int, int]] = []
        self.error: str | None = None
        owned = {c.index for c in conns}
        self.schedule = [k for k in range(cfg.n_requests) if k % cfg.connections in owned]
        self.by_index = {c.index: c for c in conns}

    def record(self, k: int, sched: int, now: int, status: Status) -> None:
        if k >= self.cfg.first_recorded:
            self.records.append((sched - self.start_ns, now - sched, int(status)))

    def _abandon(self, c: _Connection, now: int, status: Status) -> None:
        for k, sched in c.outstanding:
            self.record(k, sched, now, status)
        c.outstanding.clear()
        c.reconnect()

    def _receive(self, c: _Connection) -> None:
        data = c.sock.recv(65536)
        if not data:
            raise _Abort(f"server closed connection {c.index}")
        done_ns = time.perf_counter_ns()
        for resp in c.reader.feed(data):
            if isinstance(resp, mc.Value):
                continue
            if not c.outstanding:
                raise _Abort(f"unsolicited response {resp!r} on connection {c.index}")
            k, sched = c.outstanding.popleft()
            self.record(k, sched, done_ns, Status.ERROR if isinstance(resp, mc.Error) else Status.OK)
        if c.reader.poisoned:
            self._abandon(c, done_ns, Status.ERROR)

    def run(self) -> None:
        cfg = self.cfg
        clock = time.perf_counter_ns
        timeout = cfg.request_timeout_ns
        offsets = [self.start_ns + cfg.offset_ns(k) for k in self.schedule]
        nxt = 0
        last = clock()
        try:
            while not self.abort.is_set():
                now = clock()
                if now < last:
                    raise _Abort("monotonic clock went backwards")
                last = now
                while nxt < len(offsets) and offsets[nxt] <= now:
                    k = self.schedule[nxt]
                    self.by_index[k % cfg.connections].backlog.append((k, offsets[nxt]))
                    nxt += 1
                busy = []
                deadline = None
                for c in self.conns:
                    if c.outstanding and now - c.outstanding[0][1] >= timeout:
                        self._abandon(c, now, Status.TIMEOUT)
                    c.pump()
                    if c.outstanding:
                        busy.append(c.sock)
                        d = c.outstanding[0][1] + timeout
                        deadline = d if deadline is None else min(deadline, d)
                if nxt >= len(offsets) and not busy and not any(c.backlog for c in self.conns):
                    break
                wake = offsets[nxt] if nxt < len(offsets) else None
                if deadline is not None:
                    wake = deadline if wake is None else min(wake, deadline)
                wait_s = 0.05 if wake is None else min(0.05, max(0.0, (wake - clock()) / 1e9))
                if not busy:
                    if wait_s > 0:
                        time.sleep(wait_s)
                    continue
                readable, _, _ = select.select(busy, [], [], wait_s)
                for s in readable:
                    self._receive(self.by_sock[s])
        except (_Abort, OSError, BenchmarkError) as e:
            self.error = str(e)
            self.abort.set()
        finally:
            for c in self.conns:
                c.close()


def run_benchmark(cfg: WorkloadConfig, workers: int = 1) -> LatencyTrace:
    """Drive the target open-loop and return the post-warmup trace.

    Connection ``i`` belongs to worker ``i % workers``. Raises
    :class:`BenchmarkError` (with the partial trace attached) if any
    connection is refused, reset or closed, or the clock misbehaves.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    conns = [_Connection(cfg, i) for i in range(cfg.connections)]
    try:
        for c in conns:
            c.connect()
    except BenchmarkError:
        for c in conns:
            c.close()
        raise
    abort = threading.Event()
    start_ns = time.perf_counter_ns() + 20_000_000
    groups = [conns[w :: workers] for w in range(min(workers, len(conns)))]
    runners = [_Worker(cfg, g, start_ns, abort) for g in groups]

    def run(w: _Worker):
        # reconnect() replaces sockets, so the lookup is rebuilt lazily
        w.by_sock = _SockMap(w.conns)
        w.run()

    threads = [threading.Thread(target=run, args=(w,), name=f"loadgen-{i}", daemon=True) for i, w in enumerate(runners)]
    # a cyclic GC pass mid-run would be charged to whichever requests it delays
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    finally:
        if gc_was_enabled:
            gc.enable()

    rows = sorted((r for w in runners for r in w.records), key=lambda r: r[0])
    trace = LatencyTrace.from_records(rows)
    errors = [w.error for w in runners if w.error]
    if errors:
        raise BenchmarkError("; ".join(errors), partial=trace)
    return trace


class _SockMap:
    def __init__(self, conns: list[_Connection]):
        self.conns = conns

    def __getitem__(self, sock):
        for c in self.conns:
            if c.sock is sock:
                return c
        raise KeyError(sock)
