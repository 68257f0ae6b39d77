"""A memcached look-alike that delays every reply by a sampled latency.

Only ``get`` and ``set`` are served. The server is a single-threaded
``select`` loop: each request is answered ``delay`` after the connection's
previous reply was due (requests on one connection are handled in order, as
a real memcached worker would), using a per-connection random stream.
"""

from __future__ import annotations

import gc
import heapq
import itertools
import logging
import select
import socket
import subprocess
import sys
import tempfile
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..distributions import Constant, Empirical, LatencyDistribution
from . import protocol as mc

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MockServerConfig:
    host: str = "127.0.0.1"
    port: int = 0
    delay: LatencyDistribution = field(default_factory=lambda: Constant(0))
    capacity: int = 65536
    seed: int = 0

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("store capacity must be >= 1")


class BoundedStore:
    """Map with at most ``capacity`` entries; the oldest write is evicted first."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._data: OrderedDict[bytes, tuple[int, bytes]] = OrderedDict()

    def set(self, key: bytes, flags: int, value: bytes) -> None:
        self._data[key] = (flags, value)
        self._data.move_to_end(key)
        while len(self._data) > self.capacity:
            self._data.popitem(last=False)

    def get(self, key: bytes):
        return self._data.get(key)

    def __len__(self):
        return len(self._data)


class _Client:
    __slots__ = ("sock", "buf", "skip", "rng", "busy_until", "out")

    def __init__(self, sock: socket.socket, rng: np.random.Generator):
        self.sock = sock
        self.buf = bytearray()
        self.skip = 0
        self.rng = rng
        self.busy_until = 0
        self.out = bytearray()


class _Loop:
    def __init__(self, cfg: MockServerConfig):
        self.cfg = cfg
        self.store = BoundedStore(cfg.capacity)
        self.listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.listener.bind((cfg.host, cfg.port))
        self.listener.listen(128)
        self.listener.setblocking(False)
        self.clients: dict[socket.socket, _Client] = {}
        self.due: list[tuple[int, int, _Client, bytes]] = []
        self._seq = itertools.count()
        self._conn_index = itertools.count()
        self.stopping = threading.Event()

    @property
    def address(self) -> tuple[str, int]:
        return self.listener.getsockname()[:2]

    def execute(self, cmd) -> bytes:
        if isinstance(cmd, mc.Get):
            hit = self.store.get(cmd.key)
            if hit is None:
                return b"END\r\n"
            flags, data = hit
            return mc.encode_response(mc.Value(cmd.key, flags, data)) + b"END\r\n"
        if isinstance(cmd, mc.Set):
            self.store.set(cmd.key, cmd.flags, cmd.value)
            return b"STORED\r\n"
        return mc.encode_response(cmd)

    def _accept(self) -> None:
        try:
            sock, _ = self.listener.accept()
        except BlockingIOError:
            return
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        sock.setblocking(False)
        seq = np.random.SeedSequence(self.cfg.seed, spawn_key=(next(self._conn_index),))
        self.clients[sock] = _Client(sock, np.random.default_rng(seq))

    def _drop(self, c: _Client) -> None:
        self.clients.pop(c.sock, None)
        c.sock.close()

    def _read(self, c: _Client) -> None:
        try:
            chunk = c.sock.recv(65536)
        except (BlockingIOError, InterruptedError):
            return
        except OSError:
            self._drop(c)
            return
        if not chunk:
            self._drop(c)
            return
        if c.skip:
            n = min(c.skip, len(chunk))
            c.skip -= n
            chunk = chunk[n:]
        c.buf += chunk
        now = time.perf_counter_ns()
        while c.buf:
            cmd, used = mc.parse_command(c.buf)
            if isinstance(cmd, mc.Incomplete):
                break
            del c.buf[:used]
            if isinstance(cmd, mc.TooLarge):
                n = min(cmd.skip, len(c.buf))
                del c.buf[:n]
                c.skip = cmd.skip - n
            reply = self.execute(cmd)
            due = max(now, c.busy_until) + self.cfg.delay.sample(c.rng)
            c.busy_until = due
            heapq.heappush(self.due, (due, next(self._seq), c, reply))

    def _flush(self, c: _Client) -> None:
        try:
            n = c.sock.send(c.out)
        except (BlockingIOError, InterruptedError):
            return
        except OSError:
            self._drop(c)
            return
        del c.out[:n]

    def serve(self) -> None:
        # cyclic GC pauses of several ms would show up as injected latency
        gc_was_enabled = gc.isenabled()
        gc.disable()
        try:
            while not self.stopping.is_set():
                now = time.perf_counter_ns()
                while self.due and self.due[0][0] <= now:
                    _, _, c, reply = heapq.heappop(self.due)
                    if c.sock in self.clients:
                        c.out += reply
                        self._flush(c)
                timeout = 0.05
                if self.due:
                    timeout = min(timeout, max(0.0, (self.due[0][0] - time.perf_counter_ns()) / 1e9))
                writers = [c.sock for c in self.clients.values() if c.out]
                readable, writable, _ = select.select([self.listener, *self.clients], writers, [], timeout)
                for s in writable:
                    if s in self.clients:
                        self._flush(self.clients[s])
                for s in readable:
                    if s is self.listener:
                        self._accept()
                    elif s in self.clients:
                        self._read(self.clients[s])
        finally:
            for c in list(self.clients.values()):
                self._drop(c)
            self.listener.close()
            if gc_was_enabled:
                gc.enable()


class MockServer:
    """Runs the delay-injecting server on a background thread.

    >>> with MockServer(MockServerConfig()) as srv:  # doctest: +SKIP
    ...     host, port = srv.address
    """

    def __init__(self, cfg: MockServerConfig):
        self.cfg = cfg
        self._loop = _Loop(cfg)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._loop.address

    @property
    def store(self) -> BoundedStore:
        return self._loop.store

    def start(self) -> "MockServer":
        self._thread = threading.Thread(target=self._loop.serve, name="mock-memcached", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._loop.stopping.set()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def run_mock_server(cfg: MockServerConfig, ready=None) -> None:
    """Serve in the calling thread until interrupted.

    ``ready`` (optional callable) receives the bound ``(host, port)``.
    """
    loop = _Loop(cfg)
    log.info("mock memcached listening on %s:%d", *loop.address)
    if ready is not None:
        ready(loop.address)
    loop.serve()


class MockServerProcess:
    """The mock server in a child interpreter, so it does not share the client's GIL.

    The child is ``python -m tailkit mock-serve``; it prints its bound
    address on the first stdout line.
    """

    def __init__(self, cfg: MockServerConfig):
        self.cfg = cfg
        self.address: tuple[str, int] | None = None
        self._proc: subprocess.Popen | None = None
        self._tmp: tempfile.TemporaryDirectory | None = None

    def _delay_spec(self) -> str:
        if isinstance(self.cfg.delay, Empirical):
            from ..io import write_trace

            self._tmp = tempfile.TemporaryDirectory()
            path = Path(self._tmp.name) / "delay.csv"
            write_trace(self.cfg.delay.trace, path)
            return f"empirical:{path}"
        return self.cfg.delay.to_spec()

    def start(self) -> "MockServerProcess":
        argv = [
            sys.executable, "-m", "tailkit", "mock-serve",
            "--listen", f"{self.cfg.host}:{self.cfg.port}",
            "--delay", self._delay_spec(),
            "--capacity", str(self.cfg.capacity),
            "--seed", str(self.cfg.seed),
        ]
        self._proc = subprocess.Popen(argv, stdout=subprocess.PIPE, text=True)
        line = self._proc.stdout.readline()
        if not line:
            self.stop()
            raise RuntimeError("mock server process exited before reporting its address")
        host, port = line.split()[-1].rsplit(":", 1)
        self.address = (host, int(port))
        return self

    def stop(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        if self._proc is not None and self._proc.stdout:
            self._proc.stdout.close()
        if self._tmp is not None:
            self._tmp.cleanup()
            self._tmp = None

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
