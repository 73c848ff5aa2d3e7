"""``tmpc`` command line.

    tmpc run --example <name> --ranks <n> --transport <inproc|tcp>
             [--rendezvous host:port] [--rank r | --spawn] [--seed s]
    tmpc bench [--iterations k] [--report path]
"""

from __future__ import annotations

import argparse
import logging
import sys

from ..transport.tcp import resolve_rendezvous, resolve_timeout
from .bench import MIN_ITERATIONS, MIN_WARMUP, run_bench
from .examples import ALL_EXAMPLES, EXIT_OK, EXIT_USAGE, RunConfig, run_example


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tmpc", description="Typed message passing examples and benchmark.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a named example on an N-rank world")
    run.add_argument("--example", required=True, metavar="NAME",
                     help=f"one of: {', '.join(ALL_EXAMPLES)}")
    run.add_argument("--ranks", type=int, default=2)
    run.add_argument("--transport", choices=("inproc", "tcp"), default="inproc")
    run.add_argument("--rendezvous", metavar="HOST:PORT",
                     help="rank 0 listen address (env TMPC_RENDEZVOUS)")
    who = run.add_mutually_exclusive_group()
    who.add_argument("--rank", type=int, help="join a tcp world as this rank")
    who.add_argument("--spawn", action="store_true", help="launch every tcp rank as a subprocess")
    run.add_argument("--seed", type=int)
    run.add_argument("--connect-timeout-ms", type=int,
                     help="rendezvous deadline (env TMPC_CONNECT_TIMEOUT_MS, default 10000)")
    run.add_argument("--iterations", type=int, default=MIN_ITERATIONS, help="bench example only")
    run.add_argument("--report", default="bench_report.txt", help="bench example only")

    bench = sub.add_parser("bench", help="typed vs raw round-trip latency")
    bench.add_argument("--iterations", type=int, default=MIN_ITERATIONS)
    bench.add_argument("--warmup", type=int, default=MIN_WARMUP)
    bench.add_argument("--report", default="bench_report.txt")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "bench":
        if args.iterations < MIN_ITERATIONS or args.warmup < MIN_WARMUP:
            parser.error(f"bench needs --iterations >= {MIN_ITERATIONS} and --warmup >= {MIN_WARMUP}")
        for report in run_bench(args.iterations, args.warmup, report_path=args.report):
            print(report.line())
        return EXIT_OK

    try:
        timeout = resolve_timeout(args.connect_timeout_ms)
    except ValueError as exc:
        parser.error(str(exc))
    cfg = RunConfig(
        example=args.example, ranks=args.ranks, transport=args.transport,
        rendezvous=resolve_rendezvous(args.rendezvous), seed=args.seed, rank=args.rank,
        spawn=args.spawn, connect_timeout=timeout, iterations=args.iterations,
        report=args.report,
    )
    return run_example(cfg)


if __name__ == "__main__":
    sys.exit(main())
