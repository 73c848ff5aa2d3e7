"""Shared test helpers: threaded ranks and loopback TCP worlds."""

import socket
import threading

from tmpc import connect_tcp_world

RANK_TIMEOUT = 30.0


def run_ranks(endpoints, fn, timeout=RANK_TIMEOUT):
    """Run ``fn(ep)`` on one thread per endpoint.

    Returns a list with each rank's return value, or the exception it raised.
    """
    results = [None] * len(endpoints)

    def body(i, ep):
        try:
            results[i] = fn(ep)
        except BaseException as exc:  # noqa: BLE001
            results[i] = exc

    threads = [threading.Thread(target=body, args=(i, ep), daemon=True)
               for i, ep in enumerate(endpoints)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout)
    assert not any(t.is_alive() for t in threads), "a rank did not finish"
    return results


def raise_first(results):
    for r in results:
        if isinstance(r, BaseException):
            raise r
    return results


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def tcp_world(n, timeout=10.0):
    """Endpoints of an n-rank TCP world on loopback, one joining thread per rank."""
    address = f"127.0.0.1:{free_port()}"
    return raise_first(run_ranks(
        list(range(n)), lambda r: connect_tcp_world(address, r, n, timeout=timeout)
    ))


def close_all(endpoints):
    closers = [threading.Thread(target=ep.close) for ep in endpoints]
    for t in closers:
        t.start()
    for t in closers:
        t.join(10)


def ordering_stress(endpoints, seed, messages=100, tags=(0, 1, 2)):
    """Every rank sends ``messages`` numbered messages per (dest, tag) in a shuffled
    interleaving, and receives from every (source, tag) in another shuffled
    interleaving. Returns the list of order violations observed (empty is good).
    """
    import random

    import numpy as np

    from tmpc import TypedCommunicator

    def body(ep):
        rng = random.Random(seed * 1000 + ep.rank)
        comm = TypedCommunicator.create(ep, np.int64)
        peers = [r for r in range(ep.world_size) if r != ep.rank]
        sends = [(d, t) for d in peers for t in tags for _ in range(messages)]
        recvs = [(s, t) for s in peers for t in tags for _ in range(messages)]
        rng.shuffle(sends)
        rng.shuffle(recvs)
        next_seq = {}
        for d, t in sends:
            seq = next_seq.get((d, t), 0)
            next_seq[(d, t)] = seq + 1
            comm.send(np.array([ep.rank, t, seq], np.int64), d, t)
        expected = {}
        violations = []
        buf = np.zeros(3, np.int64)
        for s, t in recvs:
            status = comm.receive(buf, s, t)
            want = expected.get((s, t), 0)
            expected[(s, t)] = want + 1
            if (status.source, status.tag, status.count) != (s, t, 3) or buf.tolist() != [s, t, want]:
                violations.append((ep.rank, s, t, want, buf.tolist()))
        return violations

    results = run_ranks(endpoints, body)
    return [v for r in raise_first(results) for v in r]


STATIC_DIR = __import__("pathlib").Path(__file__).parent / "static_misuse"
EXPECT_MARK = "# expect-error"


def run_static_suite(cache_dir):
    """Type-check every program in ``static_misuse`` with mypy in strict mode.

    Returns ``{filename: (expected_error_lines, reported_error_lines)}``. A
    misuse program passes when both sets are equal and nonempty; the control
    program passes when both are empty.
    """
    import re

    from mypy import api

    files = sorted(STATIC_DIR.glob("*.py"))
    stdout, stderr, _ = api.run([
        "--strict", "--no-error-summary", "--show-absolute-path",
        "--cache-dir", str(cache_dir), *map(str, files),
    ])
    reported = {f.name: set() for f in files}
    pattern = re.compile(r"^(.*?):(\d+): error:")
    for line in stdout.splitlines():
        m = pattern.match(line)
        if m:
            reported[__import__("pathlib").Path(m.group(1)).name].add(int(m.group(2)))
    assert not stderr, stderr
    results = {}
    for f in files:
        expected = {i for i, text in enumerate(f.read_text().splitlines(), 1) if EXPECT_MARK in text}
        results[f.name] = (expected, reported[f.name])
    return results
