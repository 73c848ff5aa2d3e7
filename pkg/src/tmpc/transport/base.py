"""Matching mailbox and the endpoint interface shared by all backends."""

from __future__ import annotations

import itertools
import threading
import time
from collections import deque

from ..errors import InvalidDestination, Timeout, WorldShutdown
from ..wire import HEADER_SIZE, Frame, FrameKind


class Mailbox:
    """Ordered store of undelivered frames with exact-key matching.

    Frames are kept in one deque per ``(kind, source, context, tag)`` key, so
    taking the earliest match is O(1) and frames under other keys are never
    disturbed. A global arrival counter preserves the overall order for
    :meth:`snapshot`.
    """

    def __init__(self):
        self._cond = threading.Condition(threading.Lock())
        self._queues: dict[tuple[int, int, int, int], deque] = {}
        self._arrival = itertools.count()
        self._shutdown: BaseException | None = None
        self._dead_sources: dict[int, BaseException] = {}

    def put(self, frame: Frame) -> None:
        key = (frame.kind, frame.source, frame.context, frame.tag)
        with self._cond:
            q = self._queues.get(key)
            if q is None:
                q = self._queues[key] = deque()
            q.append((next(self._arrival), frame))
            self._cond.notify_all()

    def take(self, kind, source, context, tag, timeout=None) -> Frame:
        key = (kind, source, context, tag)
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while True:
                q = self._queues.get(key)
                if q:
                    return q.popleft()[1]
                if self._shutdown is not None:
                    raise self._shutdown
                if source in self._dead_sources:
                    raise self._dead_sources[source]
                if deadline is None:
                    self._cond.wait()
                else:
                    remaining = deadline - time.monotonic()
                    if remaining <= 0:
                        raise Timeout(f"no frame matching {key} within {timeout}s")
                    self._cond.wait(remaining)

    def snapshot(self) -> list[Frame]:
        """Undelivered frames in arrival order."""
        with self._cond:
            entries = [e for q in self._queues.values() for e in q]
        return [frame for _, frame in sorted(entries, key=lambda e: e[0])]

    def __len__(self) -> int:
        with self._cond:
            return sum(len(q) for q in self._queues.values())

    def fail_source(self, source: int, exc: BaseException) -> None:
        """Receives from ``source`` that find nothing queued will raise ``exc``."""
        with self._cond:
            self._dead_sources.setdefault(source, exc)
            self._cond.notify_all()

    def shutdown(self, exc: BaseException | None = None) -> None:
        with self._cond:
            if self._shutdown is None:
                self._shutdown = exc or WorldShutdown("world shut down")
            self._cond.notify_all()


class Endpoint:
    """One rank's handle on a world.

    Subclasses implement :meth:`_deliver`. Frame accounting (``sent_frames``,
    ``sent_bytes``, indexed by :class:`FrameKind`) and optional taps cover
    every frame this endpoint sends, including frames to itself.
    """

    def __init__(self, rank: int, world_size: int):
        if world_size < 1:
            raise ValueError(f"world_size must be >= 1, got {world_size}")
        if not 0 <= rank < world_size:
            raise ValueError(f"rank {rank} outside world of size {world_size}")
        self.rank = rank
        self.world_size = world_size
        self.mailbox = Mailbox()
        self.sent_frames = [0] * len(FrameKind)
        self.sent_bytes = [0] * len(FrameKind)
        self.taps: list = []
        # communicator-creation bookkeeping, advanced identically on every rank
        self.creation_seq = 0
        self.next_context = 1

    def send_frame(self, dest: int, frame: Frame) -> None:
        if not 0 <= dest < self.world_size:
            raise InvalidDestination(dest, self.world_size)
        if frame.source != self.rank:
            raise ValueError(f"frame source {frame.source} is not this rank ({self.rank})")
        self._deliver(dest, frame)
        kind = frame.kind
        self.sent_frames[kind] += 1
        self.sent_bytes[kind] += HEADER_SIZE + len(frame.payload)
        if self.taps:
            for tap in self.taps:
                tap(dest, frame)

    def recv_match(self, kind: int, source: int, context: int, tag: int,
                   timeout: float | None = None) -> Frame:
        """Remove and return the earliest frame with exactly this key. Blocks."""
        if not 0 <= source < self.world_size:
            raise InvalidDestination(source, self.world_size)
        return self.mailbox.take(kind, source, context, tag, timeout)

    def pending(self) -> list[Frame]:
        return self.mailbox.snapshot()

    def _deliver(self, dest: int, frame: Frame) -> None:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __repr__(self) -> str:
        return f"<{type(self).__name__} rank={self.rank} world_size={self.world_size}>"
