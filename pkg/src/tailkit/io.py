"""Trace CSV, report-table CSV and gnuplot data files."""

from __future__ import annotations

import io as _io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .trace import LatencyTrace, Status, TailkitError

TRACE_HEADER = "send_ns,latency_ns,status"


class TraceFileError(TailkitError, ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


def format_trace(trace: LatencyTrace) -> str:
    labels = np.array([s.label for s in Status])[trace.status]
    out = _io.StringIO()
    out.write(TRACE_HEADER + "\n")
    out.writelines(
        f"{s},{l},{st}\n" for s, l, st in zip(trace.send_ns.tolist(), trace.latency_ns.tolist(), labels.tolist())
    )
    return out.getvalue()


def write_trace(trace: LatencyTrace, path) -> None:
    Path(path).write_text(format_trace(trace), encoding="utf-8", newline="\n")


def parse_trace(text: str, source="<trace>") -> LatencyTrace:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].strip() != TRACE_HEADER:
        raise TraceFileError(source, 1, f"expected header {TRACE_HEADER!r}")
    by_label = {s.label: int(s) for s in Status}
    n = len(lines) - 1
    send = np.empty(n, dtype=np.int64)
    lat = np.empty(n, dtype=np.int64)
    st = np.empty(n, dtype=np.uint8)
    prev = None
    for i, line in enumerate(lines[1:]):
        lineno = i + 2
        parts = line.rstrip("\r").split(",")
        if len(parts) != 3:
            raise TraceFileError(source, lineno, f"expected 3 fields, got {len(parts)}")
        try:
            s, l = int(parts[0]), int(parts[1])
        except ValueError:
            raise TraceFileError(source, lineno, "send_ns and latency_ns must be integers") from None
        code = by_label.get(parts[2].strip())
        if code is None:
            raise TraceFileError(source, lineno, f"unknown status {parts[2]!r}")
        if l < 0:
            raise TraceFileError(source, lineno, "latency must be >= 0")
        if prev is not None and s < prev:
            raise TraceFileError(source, lineno, "send_ns decreases")
        prev = s
        send[i], lat[i], st[i] = s, l, code
    return LatencyTrace(send, lat, st)


def read_trace(path) -> LatencyTrace:
    path = Path(path)
    return parse_trace(path.read_text(encoding="utf-8"), source=path)


@dataclass(frozen=True, eq=False)
class ReportTable:
    """A labeled matrix, e.g. rows = connection counts, columns = thresholds."""

    row_label: str
    col_label: str
    rows: list
    cols: list
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (len(self.rows), len(self.cols)):
            raise ValueError(f"values shape {v.shape} != ({len(self.rows)}, {len(self.cols)})")
        object.__setattr__(self, "values", v)

    def __eq__(self, other):
        if not isinstance(other, ReportTable):
            return NotImplemented
        return (
            (self.row_label, self.col_label) == (other.row_label, other.col_label)
            and [str(r) for r in self.rows] == [str(r) for r in other.rows]
            and [str(c) for c in self.cols] == [str(c) for c in other.cols]
            and np.array_equal(self.values, other.values)
        )

    def to_csv(self) -> str:
        head = f"{self.row_label}\\{self.col_label}," + ",".join(str(c) for c in self.cols)
        body = [
            f"{r}," + ",".join(repr(float(x)) for x in row) for r, row in zip(self.rows, self.values)
        ]
        return "\n".join([head, *body]) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "ReportTable":
        lines = [ln for ln in text.splitlines() if ln]
        head = lines[0].split(",")
        row_label, _, col_label = head[0].partition("\\")
        rows, values = [], []
        for ln in lines[1:]:
            parts = ln.split(",")
            rows.append(parts[0])
            values.append([float(x) for x in parts[1:]])
        return cls(row_label, col_label, rows, head[1:], np.array(values).reshape(len(rows), len(head) - 1))

    def format(self, digits: int = 6) -> str:
        """Human-readable rendering, values at ``digits`` significant digits."""
        cells = [[f"{self.row_label}\\{self.col_label}", *map(str, self.cols)]]
        for r, row in zip(self.rows, self.values):
            cells.append([str(r), *(f"{x:.{digits}g}" for x in row)])
        widths = [max(len(c[i]) for c in cells) for i in range(len(cells[0]))]
        return "\n".join("  ".join(c.rjust(w) for c, w in zip(line, widths)) for line in cells) + "\n"


def emit_plot_data(table: ReportTable, path) -> None:
    """Write one whitespace-separated data block per table row.

    Blocks are separated by a blank line, so gnuplot's ``index`` selects a
    row. Each block is headed by a ``# row_label=value`` comment and holds
    ``column value`` pairs.
    """
    chunks = []
    for r, row in zip(table.rows, table.values):
        lines = [f"# {table.row_label}={r}", f"# {table.col_label} value"]
        lines += [f"{c} {float(x)!r}" for c, x in zip(table.cols, row)]
        chunks.append("\n".join(lines))
    Path(path).write_text("\n\n".join(chunks) + "\n", encoding="utf-8", newline="\n")


def read_plot_data(path) -> ReportTable:
    text = Path(path).read_text(encoding="utf-8").strip("\n")
    row_label = col_label = ""
    rows, cols, values = [], None, []
    for block in text.split("\n\n"):
        lines = block.splitlines()
        row_label, _, r = lines[0][2:].partition("=")
        col_label = lines[1][2:].split(" ")[0]
        pairs = [ln.split() for ln in lines[2:]]
        rows.append(r)
        if cols is None:
            cols = [p[0] for p in pairs]
        values.append([float(p[1]) for p in pairs])
    return ReportTable(row_label, col_label, rows, cols or [], np.array(values))
