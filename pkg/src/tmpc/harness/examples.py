"""Named multi-rank example programs and the launcher that runs them.

Exit codes: 0 success, 1 unexpected failure, 2 an example that expects an
error did not observe exactly that error, 64 usage error.
"""

from __future__ import annotations

import os
import random
import subprocess
import sys
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ..communicator import TypedCommunicator
from ..errors import CreationError, TmpcError
from ..transport import InprocWorld, connect_tcp_world
from ..transport.base import Endpoint
from ..transport.tcp import DEFAULT_CONNECT_TIMEOUT
from ..typemodel import FlatSignature, FundamentalKind
from .bench import MIN_ITERATIONS, MIN_WARMUP, run_bench

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_UNEXPECTED_OUTCOME = 2
EXIT_USAGE = 64

RUN_TIMEOUT = 120.0


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    example: str
    ranks: int = 2
    transport: str = "inproc"
    rendezvous: Optional[str] = None
    seed: Optional[int] = None
    rank: Optional[int] = None
    spawn: bool = False
    connect_timeout: float = DEFAULT_CONNECT_TIMEOUT
    iterations: int = MIN_ITERATIONS
    report: Optional[str] = "bench_report.txt"


@dataclass
class Outcome:
    code: int
    lines: list[str] = field(default_factory=list)


class ExampleFailed(Exception):
    pass


def _check(cond: bool, message: str) -> None:
    if not cond:
        raise ExampleFailed(message)


def scalar(ep: Endpoint, cfg: RunConfig) -> list[str]:
    comm = TypedCommunicator.create(ep, np.float32)
    if ep.rank == 0:
        data_to_send = np.float32(42.5)
        comm.send(data_to_send, 1, 0)
        return [f"sent {float(data_to_send)} to rank 1"]
    if ep.rank == 1:
        data_to_receive = np.zeros((), np.float32)
        status = comm.receive(data_to_receive, 0, 0)
        _check(float(data_to_receive) == 42.5, f"received {float(data_to_receive)}, expected 42.5")
        return [f"received {float(data_to_receive)} from rank {status.source} tag {status.tag}"]
    return []


RESHAPE_VALUES = np.arange(1, 7, dtype=np.float32)


def reshape(ep: Endpoint, cfg: RunConfig) -> list[str]:
    comm = TypedCommunicator.create(ep, np.float32)
    if ep.rank == 0:
        x = RESHAPE_VALUES.reshape(3, 2)
        comm.send(x, 1, 0)
        return ["sent 3x2: " + " ".join(str(v) for v in x.ravel().tolist())]
    if ep.rank == 1:
        y = np.zeros((2, 3), np.float32)
        status = comm.receive(y, 0, 0)
        _check(status.count == 6, f"received {status.count} elements, expected 6")
        _check(np.array_equal(y.ravel(), RESHAPE_VALUES), f"flatten order differs: {y.ravel()}")
        return ["received 2x3: " + " ".join(str(v) for v in y.ravel().tolist())]
    return []


F32 = FlatSignature.of(FundamentalKind.F32)
I32 = FlatSignature.of(FundamentalKind.I32)


def mismatch(ep: Endpoint, cfg: RunConfig) -> list[str]:
    element = np.int32 if ep.rank == 1 else np.float32
    try:
        TypedCommunicator.create(ep, element)
    except CreationError as err:
        _check(err.offending_rank == 1, f"offending rank {err.offending_rank}, expected 1")
        _check(err.offending_signature == I32 and err.reference_signature == F32,
               f"signatures {err.offending_signature}/{err.reference_signature}, expected [I32]/[F32]")
        local, remote = (I32, F32) if ep.rank == 1 else (F32, I32)
        _check(err.local_signature == local and err.remote_signature == remote,
               f"local/remote {err.local_signature}/{err.remote_signature}, expected {local}/{remote}")
        return [str(err)]
    raise ExampleFailed("communicator creation succeeded despite the type mismatch")


def ring(ep: Endpoint, cfg: RunConfig) -> list[str]:
    comm = TypedCommunicator.create(ep, np.int64)
    n, r = ep.world_size, ep.rank
    start = random.Random(cfg.seed if cfg.seed is not None else 0).randrange(1_000_000)
    token = np.zeros((), np.int64)
    if r == 0:
        comm.send(np.int64(start), 1 % n, 0)
        comm.receive(token, n - 1, 0)
        _check(int(token) == start + n - 1, f"token {int(token)}, expected {start + n - 1}")
        return [f"token {int(token)} returned after {n} hop(s) (start {start})"]
    comm.receive(token, r - 1, 0)
    comm.send(token + np.int64(1), (r + 1) % n, 0)
    return [f"passed token {int(token) + 1} to rank {(r + 1) % n}"]


EXAMPLES: dict[str, Callable[[Endpoint, RunConfig], list[str]]] = {
    "scalar": scalar,
    "reshape": reshape,
    "mismatch": mismatch,
    "ring": ring,
}
MIN_RANKS = {"scalar": 2, "reshape": 2, "mismatch": 2, "ring": 1, "bench": 2}
EXPECTS_ERROR = {"mismatch"}
ALL_EXAMPLES = (*EXAMPLES, "bench")


def validate(cfg: RunConfig) -> None:
    if cfg.example not in ALL_EXAMPLES:
        raise UsageError(f"unknown example {cfg.example!r} (choose from {', '.join(ALL_EXAMPLES)})")
    if cfg.ranks < 1:
        raise UsageError(f"--ranks must be >= 1, got {cfg.ranks}")
    if cfg.ranks < MIN_RANKS[cfg.example]:
        raise UsageError(f"example {cfg.example!r} needs at least {MIN_RANKS[cfg.example]} ranks")
    if cfg.transport not in ("inproc", "tcp"):
        raise UsageError(f"unknown transport {cfg.transport!r}")
    if cfg.example == "bench":
        if cfg.transport != "inproc" or cfg.ranks != 2:
            raise UsageError("the bench example runs on the inproc transport with exactly 2 ranks")
        if cfg.iterations < MIN_ITERATIONS:
            raise UsageError(f"--iterations must be >= {MIN_ITERATIONS}, got {cfg.iterations}")
    if cfg.transport == "tcp":
        if not cfg.rendezvous:
            raise UsageError("tcp transport needs --rendezvous host:port or TMPC_RENDEZVOUS")
        if cfg.spawn == (cfg.rank is not None):
            raise UsageError("tcp transport needs exactly one of --rank r or --spawn")
        if cfg.rank is not None and not 0 <= cfg.rank < cfg.ranks:
            raise UsageError(f"--rank {cfg.rank} outside 0..{cfg.ranks - 1}")
    elif cfg.rank is not None or cfg.spawn:
        raise UsageError("--rank and --spawn only apply to the tcp transport")


def run_rank(ep: Endpoint, cfg: RunConfig) -> Outcome:
    """Run ``cfg.example`` as this endpoint's rank and classify the result."""
    expects_error = cfg.example in EXPECTS_ERROR
    bad = EXIT_UNEXPECTED_OUTCOME if expects_error else EXIT_FAILURE
    try:
        return Outcome(EXIT_OK, EXAMPLES[cfg.example](ep, cfg))
    except (ExampleFailed, TmpcError) as exc:
        return Outcome(bad, [f"error: {type(exc).__name__}: {exc}"])
    except Exception as exc:  # noqa: BLE001
        return Outcome(bad, [f"unexpected error: {type(exc).__name__}: {exc}"])


def _aggregate(codes: list[int], example: str) -> int:
    if all(c == EXIT_OK for c in codes):
        return EXIT_OK
    if EXIT_USAGE in codes:
        return EXIT_USAGE
    return EXIT_UNEXPECTED_OUTCOME if example in EXPECTS_ERROR else EXIT_FAILURE


def _run_inproc(cfg: RunConfig, out) -> int:
    world = InprocWorld(cfg.ranks)
    outcomes: list[Optional[Outcome]] = [None] * cfg.ranks

    def body(ep: Endpoint) -> None:
        outcome = run_rank(ep, cfg)
        outcomes[ep.rank] = outcome
        if outcome.code != EXIT_OK:
            # unblock peers still waiting on this rank
            world.shutdown()

    threads = [threading.Thread(target=body, args=(ep,), name=f"rank-{ep.rank}")
               for ep in world.endpoints]
    for t in threads:
        t.start()
    for t in threads:
        t.join(RUN_TIMEOUT)
    if any(t.is_alive() for t in threads):
        world.shutdown()
        for t in threads:
            t.join(5.0)
    codes = []
    for rank, outcome in enumerate(outcomes):
        if outcome is None:
            outcome = Outcome(EXIT_FAILURE, ["error: rank did not finish"])
        for line in outcome.lines:
            print(f"[rank {rank}] {line}", file=out)
        codes.append(outcome.code)
    return _aggregate(codes, cfg.example)


def _run_tcp_rank(cfg: RunConfig, out) -> int:
    assert cfg.rank is not None and cfg.rendezvous is not None
    try:
        ep = connect_tcp_world(cfg.rendezvous, cfg.rank, cfg.ranks, timeout=cfg.connect_timeout)
    except TmpcError as exc:
        print(f"[rank {cfg.rank}] error: {type(exc).__name__}: {exc}", file=out)
        return _aggregate([EXIT_FAILURE], cfg.example)
    try:
        outcome = run_rank(ep, cfg)
    finally:
        ep.close()
    for line in outcome.lines:
        print(f"[rank {cfg.rank}] {line}", file=out)
    return outcome.code


def _run_tcp_spawn(cfg: RunConfig, out) -> int:
    assert cfg.rendezvous is not None
    base = [sys.executable, "-m", "tmpc", "run", "--example", cfg.example,
            "--ranks", str(cfg.ranks), "--transport", "tcp", "--rendezvous", cfg.rendezvous,
            "--connect-timeout-ms", str(int(cfg.connect_timeout * 1000))]
    if cfg.seed is not None:
        base += ["--seed", str(cfg.seed)]
    env = dict(os.environ)
    src = str(Path(__file__).resolve().parents[2])
    env["PYTHONPATH"] = src + os.pathsep + env.get("PYTHONPATH", "")
    procs = [subprocess.Popen(base + ["--rank", str(r)], stdout=subprocess.PIPE,
                              stderr=subprocess.STDOUT, text=True, env=env)
             for r in range(cfg.ranks)]
    codes = []
    for proc in procs:
        try:
            stdout, _ = proc.communicate(timeout=RUN_TIMEOUT)
        except subprocess.TimeoutExpired:
            proc.kill()
            stdout, _ = proc.communicate()
            stdout += "error: rank timed out\n"
            proc.returncode = EXIT_FAILURE
        out.write(stdout)
        codes.append(proc.returncode)
    return _aggregate(codes, cfg.example)


def run_example(cfg: RunConfig, out=None) -> int:
    """Run one example on every rank and return the aggregated exit code."""
    out = out if out is not None else sys.stdout
    try:
        validate(cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if cfg.example == "bench":
        for report in run_bench(cfg.iterations, MIN_WARMUP, report_path=cfg.report):
            print(report.line(), file=out)
        return EXIT_OK
    if cfg.transport == "inproc":
        return _run_inproc(cfg, out)
    if cfg.spawn:
        return _run_tcp_spawn(cfg, out)
    return _run_tcp_rank(cfg, out)
