"""Steady-state overhead of typed send/receive against the raw transport.

Two in-process ranks ping-pong. Each iteration times one typed round trip
and one raw round trip, alternating which goes first, so both paths see the
same scheduler and cache conditions. The raw path does what an untyped
caller of the transport would have to do to move the same array: serialize
it, wrap it in a DATA frame, and copy the received payload back into an
array with the same copy kernel the typed path uses. The typed path adds
exactly the communicator's checks on top.
"""

from __future__ import annotations

import statistics
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .._kernels import copy_into
from ..communicator import TypedCommunicator
from ..transport.inproc import InprocWorld
from ..wire import DATA, Frame

PAYLOAD_SIZES = (4, 1024, 1024 * 1024)
MIN_ITERATIONS = 1000
MIN_WARMUP = 100
_RAW_CONTEXT = 0xFFFFFFFF
_TAG = 7


@dataclass
class BenchReport:
    payload_size: int
    iterations: int
    typed_median_ns: float
    raw_median_ns: float

    @property
    def overhead_percent(self) -> float:
        return (self.typed_median_ns - self.raw_median_ns) / self.raw_median_ns * 100.0

    @property
    def ratio(self) -> float:
        return self.typed_median_ns / self.raw_median_ns

    def line(self) -> str:
        return (f"size={self.payload_size} typed={self.typed_median_ns:.0f} "
                f"raw={self.raw_median_ns:.0f} overhead={self.overhead_percent:.2f}")


def _echo(comm: TypedCommunicator, rounds: int, n: int) -> None:
    ep = comm.endpoint
    buf = np.zeros(n, np.float32)
    h = comm.element_hash
    for i in range(rounds):
        for typed in _order(i):
            if typed:
                comm.receive(buf, 0, _TAG)
                comm.send(buf, 0, _TAG)
            else:
                f = ep.recv_match(DATA, 0, _RAW_CONTEXT, _TAG)
                copy_into(buf, f.payload)
                ep.send_frame(0, Frame(DATA, 1, _RAW_CONTEXT, _TAG, h, n, buf.tobytes()))


def _order(i: int) -> tuple[bool, bool]:
    return (True, False) if i % 2 == 0 else (False, True)


def _measure(payload_size: int, iterations: int, warmup: int) -> BenchReport:
    n = max(1, payload_size // 4)
    world = InprocWorld(2)
    comms: list = [None, None]

    def make(r):
        comms[r] = TypedCommunicator.create(world.endpoints[r], np.float32)

    creators = [threading.Thread(target=make, args=(r,)) for r in (0, 1)]
    for t in creators:
        t.start()
    for t in creators:
        t.join()
    comm = comms[0]
    ep = comm.endpoint
    h = comm.element_hash
    rounds = warmup + iterations
    echo = threading.Thread(target=_echo, args=(comms[1], rounds, n), daemon=True)
    echo.start()

    src = np.arange(n, dtype=np.float32)
    dst = np.zeros(n, np.float32)
    typed_ns: list[int] = []
    raw_ns: list[int] = []
    clock = time.perf_counter_ns
    try:
        for i in range(rounds):
            for typed in _order(i):
                before = ep.sent_bytes[DATA]
                if typed:
                    t0 = clock()
                    comm.send(src, 1, _TAG)
                    comm.receive(dst, 1, _TAG)
                    t1 = clock()
                else:
                    t0 = clock()
                    ep.send_frame(1, Frame(DATA, 0, _RAW_CONTEXT, _TAG, h, n, src.tobytes()))
                    f = ep.recv_match(DATA, 1, _RAW_CONTEXT, _TAG)
                    copy_into(dst, f.payload)
                    t1 = clock()
                sent = ep.sent_bytes[DATA] - before
                if i < warmup:
                    if i == 0 and typed:
                        typed_bytes = sent
                    elif i == 0:
                        raw_bytes = sent
                    continue
                (typed_ns if typed else raw_ns).append(t1 - t0)
        assert typed_bytes == raw_bytes, (typed_bytes, raw_bytes)
        assert np.array_equal(src, dst)
    finally:
        echo.join(timeout=10)
        world.shutdown()
    return BenchReport(n * 4, iterations, statistics.median(typed_ns), statistics.median(raw_ns))


def run_bench(iterations: int = MIN_ITERATIONS, warmup: int = MIN_WARMUP,
              sizes=PAYLOAD_SIZES, report_path: str | Path | None = None) -> list[BenchReport]:
    """Measure every payload size; optionally write one ``key=value`` line per size."""
    if iterations < MIN_ITERATIONS:
        raise ValueError(f"iterations must be >= {MIN_ITERATIONS}, got {iterations}")
    if warmup < MIN_WARMUP:
        raise ValueError(f"warmup must be >= {MIN_WARMUP}, got {warmup}")
    reports = [_measure(size, iterations, warmup) for size in sizes]
    if report_path is not None:
        Path(report_path).write_text("".join(r.line() + "\n" for r in reports))
    return reports
