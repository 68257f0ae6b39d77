"""memcached load generation: codec, open-loop client and a mock server."""

from .client import HARNESS_EXCEEDANCE_BOUND, HARNESS_OVERHEAD_BOUND_NS, BenchmarkError, WorkloadConfig, parse_address, run_benchmark
from .mockserver import MockServer, MockServerConfig, MockServerProcess, run_mock_server
from .protocol import (
    End,
    Error,
    Get,
    Incomplete,
    NotFound,
    ResponseReader,
    Set,
    Stored,
    Value,
    encode_command,
    encode_response,
    parse_command,
    parse_response,
)

__all__ = [
    "BenchmarkError",
    "End",
    "Error",
    "Get",
    "HARNESS_EXCEEDANCE_BOUND",
    "HARNESS_OVERHEAD_BOUND_NS",
    "Incomplete",
    "MockServer",
    "MockServerConfig",
    "MockServerProcess",
    "NotFound",
    "ResponseReader",
    "Set",
    "Stored",
    "Value",
    "WorkloadConfig",
    "encode_command",
    "encode_response",
    "parse_address",
    "parse_command",
    "parse_response",
    "run_benchmark",
    "run_mock_server",
]
