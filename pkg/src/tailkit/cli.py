"""Command-line entry point: ``tailkit bench | analyze | amplify | simulate | mock-serve``.

Exit codes: 0 success, 1 runtime or data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import amplification as amp
from . import metrics
from .distributions import parse_distribution
from .fanout import FanoutConfig, run_simulation
from .io import ReportTable, emit_plot_data, read_trace, write_trace
from .trace import TailkitError, format_duration, parse_duration

log = logging.getLogger("tailkit")


class UsageError(Exception):
    pass


def _latency(text: str) -> int:
    try:
        ns = parse_duration(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))
    if ns <= 0:
        raise argparse.ArgumentTypeError(f"{text!r} must be > 0")
    return ns


def _seconds(text: str) -> float:
    try:
        return parse_duration(text, default_unit="s") / 1e9
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    if v < 1:
        raise argparse.ArgumentTypeError(f"{text!r} must be >= 1")
    return v


def _int_list(text: str) -> list[int]:
    return [_positive_int(t) for t in text.split(",") if t]


def _ratio(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number")
    if not (0.0 <= v <= 1.0):
        raise argparse.ArgumentTypeError(f"{text!r} must lie in [0, 1]")
    return v


def _open_ratio(text: str) -> float:
    v = _ratio(text)
    if not (0.0 < v < 1.0):
        raise argparse.ArgumentTypeError(f"{text!r} must lie in (0, 1)")
    return v


def _sweep(text: str) -> list[int]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("sweep must look like START:STOP:STEP, e.g. 100us:1000us:100us")
    start, stop, step = (_latency(p) for p in parts)
    if stop < start:
        raise argparse.ArgumentTypeError("sweep STOP must be >= START")
    return list(range(start, stop + 1, step))


def _g(x: float) -> str:
    return f"{x:.6g}"


def _binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n)


# ---------------------------------------------------------------- bench


def cmd_bench(args) -> int:
    from .loadgen import BenchmarkError, MockServerConfig, MockServerProcess, WorkloadConfig, parse_address, run_benchmark

    mock = None
    if args.mock:
        delay = parse_distribution(args.mock)
        mock = MockServerProcess(MockServerConfig(delay=delay, seed=args.seed)).start()
        host, port = mock.address
    else:
        host, port = parse_address(args.target)
    try:
        cfg = WorkloadConfig(
            host=host,
            port=port,
            rate=args.rate,
            duration_s=args.duration,
            warmup_s=args.warmup,
            connections=args.connections,
            get_fraction=args.get_fraction,
            key_count=args.keys,
            value_size=args.value_size,
            request_timeout_ns=args.timeout,
            seed=args.seed,
            pipeline=args.pipeline,
        )
        try:
            trace = run_benchmark(cfg, workers=args.workers)
        except BenchmarkError as e:
            if e.partial is not None and len(e.partial):
                partial = Path(str(args.out) + ".invalid")
                write_trace(e.partial, partial)
                print(f"partial trace (invalid) written to {partial}", file=sys.stderr)
            raise
    finally:
        if mock is not None:
            mock.stop()
    write_trace(trace, args.out)
    print(f"requests={len(trace)}")
    if len(trace):
        print(f"p50={format_duration(metrics.percentile(trace, 0.5))}")
        print(f"p99={format_duration(metrics.percentile(trace, 0.99))}")
    print(f"trace={args.out}")
    return 0


# ---------------------------------------------------------------- analyze


def cmd_analyze(args) -> int:
    traces = [(Path(p).stem, read_trace(p)) for p in args.traces]
    thresholds = list(args.threshold or [])
    for name, trace in traces:
        trace.require_nonempty()
        if len(traces) > 1:
            print(f"[{name}]")
        print(f"N={len(trace)}")
        for rep in metrics.sweep(trace, thresholds) if thresholds else []:
            print(
                f"threshold={format_duration(rep.threshold_ns)} M={rep.m_outliers} "
                f"outlier_proportion={_g(rep.outlier_proportion)} valid_throughput={rep.valid_throughput} "
                f"errors={rep.n_errors} timeouts={rep.n_timeouts}"
            )
        for n in args.tail:
            cut = metrics.percentile(trace, n)
            tail = metrics.tail_latency(trace, n)
            print(f"p{n * 100:g}={format_duration(cut)} tail{n * 100:g}={format_duration(tail)}")
    if args.sweep:
        table = ReportTable(
            "trace",
            "threshold_ns",
            [name for name, _ in traces],
            args.sweep,
            [[r.outlier_proportion for r in metrics.sweep(tr, args.sweep)] for _, tr in traces],
        )
        print(table.format(), end="")
        if args.table:
            Path(args.table).write_text(table.to_csv(), encoding="utf-8")
        if args.plot:
            emit_plot_data(table, args.plot)
    return 0


# ---------------------------------------------------------------- amplify


def cmd_amplify(args) -> int:
    scs, ks = args.sc, args.k
    if args.op is None and args.op_sj is None:
        raise UsageError("give --op (forward) and/or --op-sj (inverse budget)")
    if args.target is not None and args.op is None:
        raise UsageError("--target needs --op (the measured single-server proportion)")
    tables = []
    if args.op is not None:
        tables.append(
            ("service outlier proportion for op=%s" % _g(args.op),
             ReportTable("sc", "k", scs, ks, [[amp.service_outlier_virtualized(args.op, sc, k) for k in ks] for sc in scs]))
        )
    if args.op_sj is not None:
        if args.op_sj >= 1.0:
            raise TailkitError("--op-sj 1 leaves no finite single-server budget")
        tables.append(
            ("required single-server outlier proportion for op_sj=%s" % _g(args.op_sj),
             ReportTable("sc", "k", scs, ks, [[amp.required_single_server_outlier(args.op_sj, sc, k) for k in ks] for sc in scs]))
        )
    if args.op is not None and args.target is not None:
        tables.append(
            ("reduction factor for op=%s to reach op_sj=%s" % (_g(args.op), _g(args.target)),
             ReportTable("sc", "k", scs, ks, [[amp.reduction_factor(args.op, args.target, sc, k) for k in ks] for sc in scs]))
        )
    for i, (title, table) in enumerate(tables):
        if i:
            print()
        print(f"# {title}")
        print(table.format(), end="")
        if args.table:
            path = Path(args.table) if len(tables) == 1 else Path(args.table).with_suffix(f".{i}.csv")
            path.write_text(table.to_csv(), encoding="utf-8")
    return 0


# ---------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    dist = parse_distribution(args.dist)
    cfg = FanoutConfig(
        sc=args.sc,
        k=args.k,
        replicas=args.replicas,
        reissue_delay_ns=args.reissue_after,
        slowdown_probability=args.corr_prob,
        slowdown_multiplier=args.corr_mult,
        trials=args.trials,
        seed=args.seed,
    )
    result = run_simulation(cfg, dist, workers=args.workers)
    trace = result.trace
    lines = [
        f"dist={args.dist}",
        f"sc={cfg.sc} k={cfg.k} replicas={cfg.replicas} "
        f"reissue_after={'none' if cfg.reissue_delay_ns is None else format_duration(cfg.reissue_delay_ns)} "
        f"corr_prob={_g(cfg.slowdown_probability)} corr_mult={_g(cfg.slowdown_multiplier)}",
        f"trials={cfg.trials} seed={cfg.seed}",
        f"p50={format_duration(metrics.percentile(trace, 0.5))} p99={format_duration(metrics.percentile(trace, 0.99))}",
        f"extra_replicas_mean={_g(float(result.extra_replicas.mean()))} "
        f"replicas_sent_mean={_g(float(result.replicas_sent.mean()))}",
    ]
    for rep in metrics.sweep(trace, args.threshold) if args.threshold else []:
        p = rep.outlier_proportion
        lines.append(
            f"threshold={format_duration(rep.threshold_ns)} outlier_proportion={_g(p)} "
            f"sigma={_g(_binomial_sigma(p, rep.n_total))} valid_throughput={rep.valid_throughput}"
        )
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.summary:
        Path(args.summary).write_text(text, encoding="utf-8")
    if args.out:
        write_trace(trace, args.out)
    return 0


# ---------------------------------------------------------------- mock-serve


def cmd_mock_serve(args) -> int:
    from .loadgen import MockServerConfig, parse_address, run_mock_server

    host, port = parse_address(args.listen)
    cfg = MockServerConfig(host=host, port=port, delay=parse_distribution(args.delay), capacity=args.capacity, seed=args.seed)

    def ready(addr):
        print(f"listening on {addr[0]}:{addr[1]}", flush=True)

    try:
        run_mock_server(cfg, ready=ready)
    except KeyboardInterrupt:
        pass
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tailkit", description="Outlier-proportion and tail-latency toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="open-loop memcached load test; writes a trace CSV")
    tgt = b.add_mutually_exclusive_group(required=True)
    tgt.add_argument("--target", help="memcached address host:port")
    tgt.add_argument("--mock", metavar="DIST", help="start a local mock server with this injected delay")
    b.add_argument("--rate", type=float, required=True, help="requests per second")
    b.add_argument("--duration", type=_seconds, default=10.0, help="run length (default unit s)")
    b.add_argument("--warmup", type=_seconds, default=0.0, help="leading period excluded from the trace")
    b.add_argument("--connections", type=_positive_int, default=16)
    b.add_argument("--workers", type=_positive_int, default=1, help="client threads sharing the connections")
    b.add_argument("--get-fraction", type=_ratio, default=0.9)
    b.add_argument("--keys", type=_positive_int, default=1000)
    b.add_argument("--value-size", type=_positive_int, default=32)
    b.add_argument("--timeout", type=_latency, default=1_000_000_000, help="per-request timeout, e.g. 500ms")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--pipeline", action="store_true", help="allow several in-flight requests per connection")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)

    a = sub.add_parser("analyze", help="outlier proportion, valid throughput and tail latency of traces")
    a.add_argument("traces", nargs="+")
    a.add_argument("--threshold", type=_latency, action="append", help="outlier threshold, e.g. 100us (repeatable)")
    a.add_argument("--sweep", type=_sweep, help="threshold table START:STOP:STEP")
    a.add_argument("--tail", type=_open_ratio, action="append", default=None, help="tail percentile in (0,1)")
    a.add_argument("--table", help="write the sweep table as CSV")
    a.add_argument("--plot", help="write the sweep table as gnuplot data")
    a.set_defaults(func=cmd_analyze)

    m = sub.add_parser("amplify", help="fan-out amplification, single-server budget and reduction factor")
    m.add_argument("--op", type=_ratio, help="single-server outlier proportion")
    m.add_argument("--op-sj", type=_ratio, help="service-level target for the budget")
    m.add_argument("--target", type=_open_ratio, help="service-level target for the reduction factor")
    m.add_argument("--sc", type=_int_list, required=True, help="leaf server counts, comma separated")
    m.add_argument("--k", type=_int_list, default=[1], help="instances per server, comma separated")
    m.add_argument("--table", help="write result table(s) as CSV")
    m.set_defaults(func=cmd_amplify)

    s = sub.add_parser("simulate", help="Monte Carlo fan-out simulation")
    s.add_argument("--dist", required=True, help="leaf latency, e.g. split:50us,200us,0.01")
    s.add_argument("--sc", type=_positive_int, default=1)
    s.add_argument("--k", type=_positive_int, default=1)
    s.add_argument("--replicas", type=_positive_int, default=1)
    s.add_argument("--reissue-after", type=_latency, default=None)
    s.add_argument("--corr-prob", type=float, default=0.0)
    s.add_argument("--corr-mult", type=float, default=1.0)
    s.add_argument("--trials", type=_positive_int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--threshold", type=_latency, action="append")
    s.add_argument("--workers", type=_positive_int, default=1)
    s.add_argument("--out", help="write the service-level trace CSV")
    s.add_argument("--summary", help="write the printed summary to a file")
    s.set_defaults(func=cmd_simulate)

    ms = sub.add_parser("mock-serve", help="run the delay-injecting mock memcached")
    ms.add_argument("--listen", default="127.0.0.1:11211")
    ms.add_argument("--delay", default="constant:0ns")
    ms.add_argument("--capacity", type=_positive_int, default=65536)
    ms.add_argument("--seed", type=int, default=0)
    ms.set_defaults(func=cmd_mock_serve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "tail", 0) is None:
        args.tail = [0.99]
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        parser.error(str(e))
    except (TailkitError, ValueError, OSError) as e:
        print(f"tailkit {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
