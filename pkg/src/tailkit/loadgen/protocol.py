"""memcached ASCII protocol: the get/set subset, both directions.

Parsers are incremental. Each call looks at the front of a buffer and returns
``(message, consumed)``; ``Incomplete`` with ``consumed == 0`` means more
bytes are needed. Malformed input yields ``Error`` (never an exception) and
the caller should treat the connection as poisoned.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

CRLF = b"\r\n"
MAX_KEY_LEN = 250
MAX_LINE = 2048
MAX_VALUE_LEN = 1 << 20


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class Get:
    key: bytes


@dataclass(frozen=True)
class Set:
    key: bytes
    flags: int
    exptime: int
    value: bytes


Command = Union[Get, Set]


@dataclass(frozen=True)
class Value:
    key: bytes
    flags: int
    data: bytes


@dataclass(frozen=True)
class Stored:
    pass


@dataclass(frozen=True)
class NotFound:
    pass


@dataclass(frozen=True)
class End:
    pass


@dataclass(frozen=True)
class Error:
    text: str


@dataclass(frozen=True)
class Malformed(Error):
    """Framing the parser could not make sense of; the stream is out of sync."""


@dataclass(frozen=True)
class TooLarge(Error):
    """Rejected oversized ``set``; the server must discard ``skip`` more bytes."""

    skip: int = 0


@dataclass(frozen=True)
class Incomplete:
    pass


Response = Union[Value, Stored, NotFound, End, Error, Incomplete]

INCOMPLETE = Incomplete()


def _as_bytes(x) -> bytes:
    return x.encode() if isinstance(x, str) else bytes(x)


def valid_key(key: bytes) -> bool:
    return 0 < len(key) <= MAX_KEY_LEN and all(32 < b < 127 for b in key)


def _check_key(key: bytes) -> bytes:
    key = _as_bytes(key)
    if not valid_key(key):
        raise ProtocolError(f"invalid key {key!r}: 1..{MAX_KEY_LEN} printable bytes, no spaces")
    return key


def encode_command(cmd: Command) -> bytes:
    """
    >>> encode_command(Get(b"k1"))
    b'get k1\\r\\n'
    >>> encode_command(Set(b"k", 0, 0, b"ab"))
    b'set k 0 0 2\\r\\nab\\r\\n'
    """
    if isinstance(cmd, Get):
        return b"get " + _check_key(cmd.key) + CRLF
    if isinstance(cmd, Set):
        key = _check_key(cmd.key)
        value = _as_bytes(cmd.value)
        if not (0 <= cmd.flags < 2**32):
            raise ProtocolError(f"flags out of range: {cmd.flags}")
        if len(value) > MAX_VALUE_LEN:
            raise ProtocolError(f"value of {len(value)} bytes exceeds {MAX_VALUE_LEN}")
        head = b"set %s %d %d %d" % (key, cmd.flags, cmd.exptime, len(value))
        return head + CRLF + value + CRLF
    raise ProtocolError(f"cannot encode {cmd!r}")


def encode_response(resp: Response) -> bytes:
    if isinstance(resp, Value):
        key = _check_key(resp.key)
        return b"VALUE %s %d %d\r\n%s\r\n" % (key, resp.flags, len(resp.data), resp.data)
    if isinstance(resp, Stored):
        return b"STORED\r\n"
    if isinstance(resp, NotFound):
        return b"NOT_FOUND\r\n"
    if isinstance(resp, End):
        return b"END\r\n"
    if isinstance(resp, Error):
        if "\r" in resp.text or "\n" in resp.text:
            raise ProtocolError("error text may not contain line breaks")
        if not resp.text or resp.text == "ERROR":
            return b"ERROR\r\n"
        return resp.text.encode() + CRLF
    raise ProtocolError(f"cannot encode {resp!r}")


def _uint(tok: bytes, limit: int) -> int | None:
    if not tok.isdigit() or len(tok) > 20:
        return None
    v = int(tok)
    return v if v < limit else None


def _line(buf: bytes):
    """Return (line, consumed) or (None, 0) if no full line yet, or an Error."""
    end = buf.find(CRLF, 0, MAX_LINE + 2)
    if end < 0:
        if len(buf) > MAX_LINE + 1:
            return Malformed(f"line exceeds {MAX_LINE} bytes without CRLF"), len(buf)
        return None, 0
    return buf[:end], end + 2


def parse_response(buf: bytes) -> tuple[Response, int]:
    """Parse one server response from the front of ``buf``.

    ``VALUE`` blocks and the closing ``END`` are separate responses.
    """
    buf = bytes(buf)
    line, used = _line(buf)
    if line is None:
        return INCOMPLETE, 0
    if isinstance(line, Error):
        return line, used
    if line.startswith(b"VALUE "):
        parts = line.split(b" ")
        if len(parts) not in (4, 5) or not valid_key(parts[1]):
            return Malformed(f"malformed VALUE header {line[:64]!r}"), used
        flags = _uint(parts[2], 2**32)
        size = _uint(parts[3], MAX_VALUE_LEN + 1)
        if flags is None or size is None or (len(parts) == 5 and _uint(parts[4], 2**64) is None):
            return Malformed(f"malformed VALUE header {line[:64]!r}"), used
        total = used + size + 2
        if len(buf) < total:
            return INCOMPLETE, 0
        if buf[used + size : total] != CRLF:
            return Malformed("VALUE data block not terminated by CRLF"), total
        return Value(parts[1], flags, buf[used : used + size]), total
    if line == b"END":
        return End(), used
    if line == b"STORED":
        return Stored(), used
    if line == b"NOT_FOUND":
        return NotFound(), used
    if line == b"ERROR":
        return Error("ERROR"), used
    if line.startswith((b"CLIENT_ERROR", b"SERVER_ERROR", b"NOT_STORED", b"EXISTS")):
        return Error(line.decode("ascii", "replace")), used
    return Malformed(f"unexpected response line {line[:64]!r}"), used


class ResponseReader:
    """Accumulates bytes from a stream and yields complete responses."""

    def __init__(self):
        self._buf = bytearray()
        self.poisoned = False

    def feed(self, data: bytes) -> list[Response]:
        self._buf += data
        out = []
        while self._buf:
            resp, used = parse_response(self._buf)
            if isinstance(resp, Incomplete):
                break
            del self._buf[:used]
            if isinstance(resp, Malformed):
                self.poisoned = True
            out.append(resp)
        return out

    @property
    def pending(self) -> int:
        return len(self._buf)


def parse_command(buf: bytes) -> tuple[Command | Error | Incomplete, int]:
    """Server side: parse one get/set request from the front of ``buf``."""
    buf = bytes(buf)
    line, used = _line(buf)
    if line is None:
        return INCOMPLETE, 0
    if isinstance(line, Error):
        return Error("CLIENT_ERROR line too long"), used
    parts = line.split()
    if not parts:
        return Error("ERROR"), used
    verb = parts[0]
    if verb == b"get":
        if len(parts) != 2 or not valid_key(parts[1]):
            return Error("CLIENT_ERROR bad get"), used
        return Get(parts[1]), used
    if verb == b"set":
        if len(parts) not in (5, 6) or not valid_key(parts[1]):
            return Error("CLIENT_ERROR bad command line format"), used
        flags = _uint(parts[2], 2**32)
        exptime = _uint(parts[3], 2**63)
        size = _uint(parts[4], 2**63)
        if flags is None or exptime is None or size is None:
            return Error("CLIENT_ERROR bad command line format"), used
        if size > MAX_VALUE_LEN:
            return TooLarge("SERVER_ERROR object too large for cache", skip=size + 2), used
        total = used + size + 2
        if len(buf) < total:
            return INCOMPLETE, 0
        if buf[used + size : total] != CRLF:
            return Error("CLIENT_ERROR bad data chunk"), total
        return Set(parts[1], flags, exptime, buf[used : used + size]), total
    return Error("ERROR"), used
