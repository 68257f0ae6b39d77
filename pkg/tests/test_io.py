import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tailkit.io import (
    TRACE_HEADER,
    ReportTable,
    TraceFileError,
    emit_plot_data,
    format_trace,
    parse_trace,
    read_plot_data,
    read_trace,
    write_trace,
)
from tailkit.trace import LatencyTrace, Status

records = st.lists(
    st.tuples(st.integers(0, 10**12), st.integers(0, 10**12), st.sampled_from(list(Status))), max_size=100
).map(lambda rs: sorted(rs, key=lambda r: r[0]))


@given(records)
def test_trace_round_trip(rs):
    tr = LatencyTrace.from_records(rs)
    assert parse_trace(format_trace(tr)) == tr


def test_file_format(tmp_path):
    tr = LatencyTrace.from_records([(0, 5, Status.OK), (1, 6, Status.TIMEOUT), (2, 7, Status.ERROR)])
    path = tmp_path / "t.csv"
    write_trace(tr, path)
    raw = path.read_bytes()
    assert raw == b"send_ns,latency_ns,status\n0,5,ok\n1,6,timeout\n2,7,error\n"
    assert read_trace(path) == tr


def test_crlf_tolerated():
    assert len(parse_trace(TRACE_HEADER + "\r\n0,1,ok\r\n")) == 1


def test_empty_trace_file():
    assert len(parse_trace(TRACE_HEADER + "\n")) == 0


@pytest.mark.parametrize(
    "body,line",
    [
        ("0,1,ok\n0,x,ok\n", 3),
        ("0,1,ok\n1,2\n", 3),
        ("0,1,slow\n", 2),
        ("5,1,ok\n4,1,ok\n", 3),
        ("0,-1,ok\n", 2),
    ],
)
def test_malformed_line_number(body, line):
    with pytest.raises(TraceFileError) as ei:
        parse_trace(TRACE_HEADER + "\n" + body, source="t.csv")
    assert ei.value.line == line
    assert f"t.csv:{line}:" in str(ei.value)


def test_missing_header():
    with pytest.raises(TraceFileError) as ei:
        parse_trace("0,1,ok\n")
    assert ei.value.line == 1


def table3():
    return ReportTable("cores", "threshold_ns", [1, 2, 4], [100, 200, 300], np.arange(9).reshape(3, 3) / 10)


def test_table_csv_round_trip():
    t = table3()
    assert t.to_csv().splitlines()[0] == "cores\\threshold_ns,100,200,300"
    assert ReportTable.from_csv(t.to_csv()) == t


def test_table_shape_checked():
    with pytest.raises(ValueError):
        ReportTable("a", "b", [1], [1, 2], [[1.0]])


def test_table_format_digits():
    t = ReportTable("r", "c", ["x"], ["y"], [[1 / 3]])
    assert "0.333333" in t.format() and "0.3333333" not in t.format()


def test_plot_blocks(tmp_path):
    path = tmp_path / "p.dat"
    emit_plot_data(table3(), path)
    blocks = path.read_text().strip("\n").split("\n\n")
    assert len(blocks) == 3
    assert blocks[0].splitlines()[0] == "# cores=1"
    assert [ln.split() for ln in blocks[2].splitlines()[2:]] == [["100", "0.6"], ["200", "0.7"], ["300", "0.8"]]
    back = read_plot_data(path)
    assert np.array_equal(back.values, table3().values)
    assert back == table3()
