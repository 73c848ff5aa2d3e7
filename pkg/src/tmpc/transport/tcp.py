"""TCP world: one OS process per rank, full mesh of direct links.

Rendezvous is a star around rank 0, which listens on the rendezvous address.
Each joiner opens its own listener, connects to rank 0 and announces
``(rank, world_size, listen_port)``. Once every rank has joined, rank 0 sends
each joiner the peer table. Then every lower rank connects to every higher
rank's listener, so each pair shares exactly one connection. Frames travel
in the wire format of :mod:`tmpc.wire`.
"""

from __future__ import annotations

import logging
import os
import socket
import struct
import threading
import time

from ..errors import ConnectionLost, DuplicateRank, FrameError, RendezvousError, Timeout
from ..wire import HEADER_SIZE, Frame, decode_header, encode_header
from .base import Endpoint

log = logging.getLogger(__name__)

DEFAULT_CONNECT_TIMEOUT = 10.0
RENDEZVOUS_ENV = "TMPC_RENDEZVOUS"
TIMEOUT_ENV = "TMPC_CONNECT_TIMEOUT_MS"

_JOIN = struct.Struct("<4sIIH")
_JOIN_MAGIC = b"TMPJ"
_MESH = struct.Struct("<4sI")
_MESH_MAGIC = b"TMPM"

_OK, _DUPLICATE, _BAD_JOIN, _ABORTED = 0, 1, 2, 3

# frames above this size skip the header+payload concatenation
_COALESCE_LIMIT = 64 * 1024


def parse_address(address) -> tuple[str, int]:
    if isinstance(address, tuple):
        host, port = address
        return str(host), int(port)
    host, sep, port = str(address).rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"rendezvous address must be host:port, got {address!r}")
    return host or "127.0.0.1", int(port)


def resolve_rendezvous(flag: str | None) -> str | None:
    return flag or os.environ.get(RENDEZVOUS_ENV) or None


def resolve_timeout(flag_ms: int | None) -> float:
    if flag_ms is None:
        env = os.environ.get(TIMEOUT_ENV)
        if not env:
            return DEFAULT_CONNECT_TIMEOUT
        flag_ms = int(env)
    if flag_ms <= 0:
        raise ValueError(f"connect timeout must be positive, got {flag_ms} ms")
    return flag_ms / 1000.0


def _remaining(deadline: float, what: str) -> float:
    left = deadline - time.monotonic()
    if left <= 0:
        raise Timeout(f"timed out {what}")
    return left


def _recv_exact(sock: socket.socket, n: int, allow_eof: bool = False):
    buf = bytearray(n)
    view = memoryview(buf)
    got = 0
    while got < n:
        k = sock.recv_into(view[got:])
        if k == 0:
            if allow_eof and got == 0:
                return None
            raise ConnectionLost(f"peer closed after {got} of {n} bytes")
        got += k
    return bytes(buf)


def _recv_exact_by(sock: socket.socket, n: int, deadline: float, what: str) -> bytes:
    sock.settimeout(_remaining(deadline, what))
    try:
        return _recv_exact(sock, n)
    except socket.timeout:
        raise Timeout(f"timed out {what}") from None


def _connect_retry(addr: tuple[str, int], deadline: float, what: str) -> socket.socket:
    delay = 0.01
    while True:
        left = _remaining(deadline, what)
        try:
            return socket.create_connection(addr, timeout=left)
        except (ConnectionRefusedError, ConnectionResetError, socket.timeout):
            time.sleep(min(delay, max(deadline - time.monotonic(), 0)))
            delay = min(delay * 2, 0.2)


def _pack_table(table: list[tuple[str, int]]) -> bytes:
    out = bytearray([_OK])
    for host, port in table:
        raw = host.encode()
        out += bytes([len(raw)]) + raw + struct.pack("<H", port)
    return bytes(out)


def _read_table(sock: socket.socket, world_size: int, deadline: float) -> list[tuple[str, int]]:
    table = []
    for _ in range(world_size):
        (hl,) = _recv_exact_by(sock, 1, deadline, "reading peer table")
        host = _recv_exact_by(sock, hl, deadline, "reading peer table").decode()
        (port,) = struct.unpack("<H", _recv_exact_by(sock, 2, deadline, "reading peer table"))
        table.append((host, port))
    return table


def _abort(conns, status: int, rank: int = 0) -> None:
    for conn in conns:
        try:
            conn.sendall(bytes([status]) + struct.pack("<I", rank))
        except OSError:
            pass
        conn.close()


def _rendezvous_root(address, world_size, deadline):
    host, port = parse_address(address)
    lsock = socket.create_server((host, port), backlog=max(world_size, 8))
    joined: dict[int, tuple[socket.socket, str, int]] = {}
    try:
        while len(joined) < world_size - 1:
            lsock.settimeout(_remaining(deadline, f"waiting for {world_size - 1 - len(joined)} rank(s) to join"))
            try:
                conn, peer = lsock.accept()
            except socket.timeout:
                raise Timeout(f"only {len(joined) + 1} of {world_size} ranks joined") from None
            hello = _recv_exact_by(conn, _JOIN.size, deadline, "reading join request")
            magic, rank, size, lport = _JOIN.unpack(hello)
            others = [c for c, _, _ in joined.values()]
            if magic != _JOIN_MAGIC or size != world_size or not 0 < rank < world_size:
                _abort([conn], _BAD_JOIN, rank)
                _abort(others, _ABORTED)
                raise RendezvousError(
                    f"bad join request from {peer}: rank {rank}, world_size {size} "
                    f"(expected world_size {world_size})"
                )
            if rank in joined:
                _abort([conn, *others], _DUPLICATE, rank)
                raise DuplicateRank(rank)
            joined[rank] = (conn, peer[0], lport)
        table = [(host, port)] + [(joined[r][1], joined[r][2]) for r in range(1, world_size)]
        msg = _pack_table(table)
        for conn, _, _ in joined.values():
            conn.sendall(msg)
        return table
    except BaseException:
        _abort([c for c, _, _ in joined.values()], _ABORTED)
        raise
    finally:
        for conn, _, _ in joined.values():
            conn.close()
        lsock.close()


def _rendezvous_joiner(address, rank, world_size, deadline):
    ctrl = _connect_retry(parse_address(address), deadline, "connecting to rank 0")
    try:
        lsock = socket.create_server((ctrl.getsockname()[0], 0), backlog=max(world_size, 8))
        try:
            ctrl.sendall(_JOIN.pack(_JOIN_MAGIC, rank, world_size, lsock.getsockname()[1]))
            (status,) = _recv_exact_by(ctrl, 1, deadline, "waiting for the peer table")
            if status != _OK:
                (bad,) = struct.unpack("<I", _recv_exact_by(ctrl, 4, deadline, "reading rejection"))
                if status == _DUPLICATE:
                    raise DuplicateRank(bad)
                if status == _BAD_JOIN:
                    raise RendezvousError(f"rank 0 rejected join of rank {rank} / world_size {world_size}")
                raise RendezvousError("rendezvous aborted by rank 0")
            return _read_table(ctrl, world_size, deadline), lsock
        except BaseException:
            lsock.close()
            raise
    except ConnectionLost as exc:
        raise RendezvousError(f"rank 0 dropped the rendezvous: {exc}") from None
    finally:
        ctrl.close()


def connect_tcp_world(rendezvous, rank: int, world_size: int,
                      timeout: float = DEFAULT_CONNECT_TIMEOUT) -> TcpEndpoint:
    """Join a TCP world as ``rank``. Collective: every rank must call it."""
    if world_size < 1 or not 0 <= rank < world_size:
        raise ValueError(f"rank {rank} outside world of size {world_size}")
    deadline = time.monotonic() + timeout
    links: dict[int, socket.socket] = {}
    if world_size == 1:
        return TcpEndpoint(rank, world_size, links)

    lsock = None
    try:
        if rank == 0:
            table = _rendezvous_root(rendezvous, world_size, deadline)
        else:
            table, lsock = _rendezvous_joiner(rendezvous, rank, world_size, deadline)

        for peer in range(rank + 1, world_size):
            sock = _connect_retry(table[peer], deadline, f"connecting to rank {peer}")
            sock.sendall(_MESH.pack(_MESH_MAGIC, rank))
            links[peer] = sock
        while lsock is not None and len(links) < world_size - 1:
            lsock.settimeout(_remaining(deadline, "waiting for lower ranks to connect"))
            try:
                sock, _ = lsock.accept()
            except socket.timeout:
                raise Timeout("lower ranks did not connect in time") from None
            magic, peer = _MESH.unpack(_recv_exact_by(sock, _MESH.size, deadline, "reading mesh hello"))
            if magic != _MESH_MAGIC or not 0 <= peer < rank or peer in links:
                sock.close()
                raise RendezvousError(f"unexpected mesh connection claiming rank {peer}")
            links[peer] = sock
    except BaseException:
        for sock in links.values():
            sock.close()
        raise
    finally:
        if lsock is not None:
            lsock.close()
    return TcpEndpoint(rank, world_size, links)


class TcpEndpoint(Endpoint):
    def __init__(self, rank: int, world_size: int, links: dict[int, socket.socket]):
        super().__init__(rank, world_size)
        self._links = links
        self._closing = False
        self._fatal: ConnectionLost | None = None
        self._readers = []
        for peer, sock in links.items():
            sock.settimeout(None)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            t = threading.Thread(target=self._read_loop, args=(peer, sock),
                                 name=f"tmpc-rank{rank}-from{peer}", daemon=True)
            t.start()
            self._readers.append(t)

    def _read_loop(self, peer: int, sock: socket.socket) -> None:
        try:
            while True:
                header = _recv_exact(sock, HEADER_SIZE, allow_eof=True)
                if header is None:
                    break
                kind, source, context, tag, type_hash, count, length = decode_header(header)
                if source != peer:
                    raise FrameError(f"frame claims source {source} on link from rank {peer}",
                                     field="source")
                payload = _recv_exact(sock, length) if length else b""
                self.mailbox.put(Frame(kind, source, context, tag, type_hash, count, payload))
        except (OSError, ConnectionLost, FrameError) as exc:
            if not self._closing:
                self._die(ConnectionLost(f"link from rank {peer} failed: {exc}"))
            return
        finally:
            if self._closing:
                sock.close()
        self.mailbox.fail_source(peer, ConnectionLost(f"rank {peer} closed its link"))

    def _die(self, exc: ConnectionLost) -> None:
        if self._fatal is None:
            self._fatal = exc
            log.error("rank %d: %s", self.rank, exc)
        self.mailbox.shutdown(exc)

    def _deliver(self, dest: int, frame: Frame) -> None:
        if self._fatal is not None:
            raise self._fatal
        if dest == self.rank:
            self.mailbox.put(frame)
            return
        sock = self._links[dest]
        header = encode_header(frame)
        try:
            if len(frame.payload) <= _COALESCE_LIMIT:
                sock.sendall(header + frame.payload)
            else:
                sock.sendall(header)
                sock.sendall(frame.payload)
        except OSError as exc:
            err = ConnectionLost(f"link to rank {dest} failed: {exc}")
            self._die(err)
            raise err from exc

    def close(self, linger: float = 2.0) -> None:
        """Half-close every link and give peers ``linger`` seconds to finish.

        Sockets are only fully closed once the peer's side has closed too, so
        late data from a slower peer is never answered with a reset.
        """
        if self._closing:
            return
        self._closing = True
        for sock in self._links.values():
            try:
                sock.shutdown(socket.SHUT_WR)
            except OSError:
                pass
        deadline = time.monotonic() + linger
        for t in self._readers:
            t.join(max(0.0, deadline - time.monotonic()))
        self.mailbox.shutdown()
