import math
import re
import subprocess
import sys

import pytest

from tailkit.cli import main
from tailkit.io import ReportTable, read_plot_data, read_trace, write_trace
from tailkit.trace import LatencyTrace


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def usage_exit(argv, capsys):
    with pytest.raises(SystemExit) as ei:
        main(argv)
    capsys.readouterr()
    return ei.value.code


def field(out: str, name: str) -> float:
    return float(re.search(rf"{name}=([0-9.e+-]+)", out).group(1))


@pytest.fixture
def small_trace(tmp_path):
    path = tmp_path / "t.csv"
    write_trace(LatencyTrace.from_latencies([50_000, 150_000, 90_000, 200_000]), path)
    return path


class TestAnalyze:
    def test_threshold(self, small_trace, capsys):
        code, out, _ = run(["analyze", str(small_trace), "--threshold", "100us"], capsys)
        assert code == 0
        assert "N=4" in out and "M=2" in out and "valid_throughput=2" in out
        assert field(out, "outlier_proportion") == 0.5

    def test_sweep_table(self, small_trace, tmp_path, capsys):
        csv, dat = tmp_path / "s.csv", tmp_path / "s.dat"
        code, out, _ = run(
            ["analyze", str(small_trace), "--sweep", "100us:1000us:100us", "--table", str(csv), "--plot", str(dat)],
            capsys,
        )
        assert code == 0
        table = ReportTable.from_csv(csv.read_text())
        assert len(table.cols) == 10
        row = table.values[0]
        assert all(a >= b for a, b in zip(row, row[1:]))
        assert read_plot_data(dat) == table

    def test_tail(self, tmp_path, capsys):
        path = tmp_path / "t.csv"
        write_trace(LatencyTrace.from_latencies([1000, 2000, 3000, 4000, 100_000]), path)
        _, out, _ = run(["analyze", str(path), "--tail", "0.5"], capsys)
        assert "p50=3us" in out and "tail50=35.6667us" in out

    def test_malformed_names_line(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("send_ns,latency_ns,status\n0,1,ok\n1,oops,ok\n")
        code, _, err = run(["analyze", str(path), "--threshold", "1ms"], capsys)
        assert code == 1
        assert "bad.csv:3:" in err

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run(["analyze", str(tmp_path / "nope.csv")], capsys)
        assert code == 1 and "error" in err

    def test_threshold_needs_unit(self, small_trace, capsys):
        assert usage_exit(["analyze", str(small_trace), "--threshold", "100"], capsys) == 2


class TestAmplify:
    def test_budget(self, capsys):
        code, out, _ = run(["amplify", "--op-sj", "0.10", "--sc", "10000"], capsys)
        assert code == 0
        value = float(out.strip().splitlines()[-1].split()[-1])
        assert round(value, 6) == 0.000011

    def test_reduction_factor(self, capsys):
        _, out, _ = run(["amplify", "--op", "0.0909", "--target", "0.10", "--sc", "1000"], capsys)
        factor = float(out.strip().splitlines()[-1].split()[-1])
        assert factor == pytest.approx(862.8, abs=0.5)

    def test_grid_table(self, tmp_path, capsys):
        path = tmp_path / "a.csv"
        run(["amplify", "--op", "0.01", "--sc", "1,10,100", "--k", "1,4", "--table", str(path)], capsys)
        t = ReportTable.from_csv(path.read_text())
        assert t.values.shape == (3, 2)
        assert t.values[2, 0] == pytest.approx(1 - 0.99**100, rel=1e-12)

    @pytest.mark.parametrize(
        "argv",
        [["amplify", "--op", "0.1", "--sc", "0"], ["amplify", "--sc", "10"], ["amplify", "--op", "2", "--sc", "1"]],
    )
    def test_usage_errors(self, argv, capsys):
        assert usage_exit(argv, capsys) == 2

    def test_unit_op_sj(self, capsys):
        code, _, err = run(["amplify", "--op-sj", "1", "--sc", "10"], capsys)
        assert code == 1 and "budget" in err


class TestSimulate:
    def test_eq2_oracle(self, capsys):
        argv = ["simulate", "--dist", "split:50us,200us,0.01", "--sc", "10", "--trials", "1000000"]
        _, out, _ = run(argv + ["--threshold", "100us", "--seed", "1"], capsys)
        p = field(out, "outlier_proportion")
        expected = 1 - 0.99**10
        assert abs(p - expected) <= 3 * math.sqrt(expected * (1 - expected) / 1e6)

    def test_same_seed_same_files(self, tmp_path, capsys):
        outs = []
        for i in range(2):
            t, s = tmp_path / f"t{i}.csv", tmp_path / f"s{i}.txt"
            run(["simulate", "--dist", "exp:100us", "--sc", "5", "--trials", "5000", "--seed", "9",
                 "--threshold", "300us", "--out", str(t), "--summary", str(s)], capsys)
            outs.append((t.read_bytes(), s.read_bytes()))
        assert outs[0] == outs[1]

    def test_replicas(self, capsys):
        argv = ["simulate", "--dist", "split:50us,200us,0.1", "--sc", "1", "--replicas", "2",
                "--trials", "1000000", "--threshold", "100us"]
        _, out, _ = run(argv, capsys)
        p = field(out, "outlier_proportion")
        assert abs(p - 0.01) <= 3 * math.sqrt(0.01 * 0.99 / 1e6)

    def test_empirical_dist(self, small_trace, capsys):
        code, out, _ = run(["simulate", "--dist", f"empirical:{small_trace}", "--trials", "100"], capsys)
        assert code == 0 and "trials=100" in out

    def test_bad_dist(self, capsys):
        code, _, err = run(["simulate", "--dist", "weibull:1,2"], capsys)
        assert code == 1 and "unknown distribution" in err


class TestBench:
    def test_missing_target(self, tmp_path, capsys):
        assert usage_exit(["bench", "--rate", "1000", "--duration", "1", "--out", str(tmp_path / "t.csv")], capsys) == 2

    def test_mock_constant(self, tmp_path, capsys):
        out_path = tmp_path / "t.csv"
        code, out, _ = run(
            ["bench", "--mock", "constant:1ms", "--rate", "200", "--duration", "2", "--warmup", "0.5",
             "--connections", "4", "--out", str(out_path)],
            capsys,
        )
        assert code == 0
        tr = read_trace(out_path)
        assert abs(len(tr) - 300) <= 1
        assert "p50=1." in out

    def test_unreachable(self, tmp_path, capsys):
        import socket

        with socket.socket() as s:
            s.bind(("127.0.0.1", 0))
            port = s.getsockname()[1]
        code, _, err = run(
            ["bench", "--target", f"127.0.0.1:{port}", "--rate", "10", "--duration", "1", "--out", str(tmp_path / "t")],
            capsys,
        )
        assert code == 1 and "cannot connect" in err


def test_module_entry_point_exit_code(tmp_path):
    r = subprocess.run(
        [sys.executable, "-m", "tailkit", "amplify", "--op", "0.1", "--sc", "0"], capture_output=True, text=True
    )
    assert r.returncode == 2
    r = subprocess.run([sys.executable, "-m", "tailkit", "amplify", "--op", "0.5", "--sc", "2"], capture_output=True, text=True)
    assert r.returncode == 0 and "0.75" in r.stdout
