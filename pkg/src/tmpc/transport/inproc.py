"""In-process world: every rank lives in this process, frames are handed over by reference.

Payloads are immutable ``bytes`` so sharing them is indistinguishable from
copying them through a socket.
"""

from __future__ import annotations

from ..errors import WorldShutdown
from ..wire import Frame
from .base import Endpoint


class InprocWorld:
    def __init__(self, n: int):
        if n < 1:
            raise ValueError(f"world needs at least one rank, got {n}")
        self.endpoints = [InprocEndpoint(self, r, n) for r in range(n)]
        self._mailboxes = [ep.mailbox for ep in self.endpoints]
        self.closed = False

    def shutdown(self) -> None:
        """Wake every blocked receive with :class:`WorldShutdown`."""
        self.closed = True
        for mb in self._mailboxes:
            mb.shutdown()

    def handshake_frames(self) -> int:
        """Handshake frames sent so far by all ranks together."""
        return sum(ep.sent_frames[1] + ep.sent_frames[2] for ep in self.endpoints)


class InprocEndpoint(Endpoint):
    def __init__(self, world: InprocWorld, rank: int, world_size: int):
        super().__init__(rank, world_size)
        self.world = world

    def _deliver(self, dest: int, frame: Frame) -> None:
        if self.world.closed:
            raise WorldShutdown("world shut down")
        self.world._mailboxes[dest].put(frame)

    def close(self) -> None:
        self.mailbox.shutdown()


def spawn_inproc_world(n: int) -> list[InprocEndpoint]:
    """Return ``n`` connected endpoints, ranks ``0..n-1``. ``ep.world`` owns them."""
    return InprocWorld(n).endpoints
