"""Pure-Python kernels. Reference behaviour for the compiled module."""

import struct

import numpy as np

FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

_HEADER = struct.Struct("<4sHBIIIQQQ")
HEADER_SIZE = _HEADER.size


def fnv1a64(data):
    h = FNV_OFFSET_BASIS
    for byte in bytes(data):
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def repeat_count(seq, unit):
    """Return n if ``seq`` is exactly n >= 1 copies of ``unit``, else 0."""
    u = len(unit)
    if u == 0:
        raise ValueError("unit must be nonempty")
    n, rem = divmod(len(seq), u)
    if rem or n == 0:
        return 0
    return n if seq == unit * n else 0


def find_bad_bool(payload, stride, offsets):
    """Index of the first byte at a boolean position that is not 0 or 1, or -1."""
    if len(offsets) == 0 or len(payload) == 0:
        return -1
    raw = np.frombuffer(payload, dtype=np.uint8)
    rows = raw.reshape(-1, stride)
    cols = np.asarray(offsets, dtype=np.intp)
    bad = np.nonzero(rows[:, cols] > 1)
    if bad[0].size == 0:
        return -1
    return int(bad[0][0]) * stride + int(cols[bad[1][0]])


def pack_header(magic, version, kind, source, context, tag, type_hash, count, length):
    return _HEADER.pack(magic, version, kind, source, context, tag, type_hash, count, length)


def unpack_header(buf):
    return _HEADER.unpack_from(buf, 0)


# -- communicator hot path ----------------------------------------------------

from typing import NamedTuple  # noqa: E402

from ..errors import (  # noqa: E402
    CommunicatorPoisoned, InvalidDestination, PayloadSizeMismatch, Truncation,
    TypeConfusion, UnsupportedType,
)

_MAX_TAG = 0xFFFFFFFF


def copy_into(arr, payload):
    """Copy ``payload`` into the front of a writable C-contiguous array."""
    if not (arr.flags.c_contiguous and arr.flags.writeable):
        raise ValueError("destination must be a writable C-contiguous array")
    if len(payload) > arr.nbytes:
        raise ValueError(f"{len(payload)} bytes do not fit in a {arr.nbytes}-byte array")
    memoryview(arr).cast("B")[:len(payload)] = payload


class ReceiveStatus(NamedTuple):
    source: int
    tag: int
    count: int  # type: ignore[assignment]  # shadows tuple.count by design


class CommunicatorCore:
    """Steady-state send/receive. Cache misses and slow layouts call back into Python."""

    def __init__(self, endpoint, context, element_hash, element_size, has_bool,
                 frame_type, resolve, slow_pack, slow_write, check_bools):
        self.endpoint = endpoint
        self.rank = endpoint.rank
        self.world_size = endpoint.world_size
        self.context = context
        self.element_hash = element_hash
        self.element_size = element_size
        self._has_bool = has_bool
        self._send_frame = endpoint.send_frame
        self._recv_match = endpoint.recv_match
        self._frame = frame_type
        self._resolve = resolve
        self._slow_pack = slow_pack
        self._slow_write = slow_write
        self._check_bools = check_bools
        self._poison = None
        self._cache = {}

    @property
    def poisoned(self):
        return self._poison is not None

    def _lookup(self, arr):
        key = (arr.dtype, arr.shape)
        hit = self._cache.get(key)
        if hit is None:
            hit = self._cache[key] = self._resolve(arr)
        return hit

    def send(self, buffer, dest, tag=0):
        if self._poison is not None:
            raise CommunicatorPoisoned(str(self._poison))
        if type(buffer) is np.ndarray:
            arr = buffer
        elif isinstance(buffer, np.generic):
            arr = np.asarray(buffer)
        else:
            raise UnsupportedType(
                f"buffers must be numpy arrays or numpy scalars, got {type(buffer).__name__}")
        count, canonical = self._lookup(arr)
        if not 0 <= dest < self.world_size:
            raise InvalidDestination(dest, self.world_size)
        if not 0 <= tag <= _MAX_TAG:
            raise ValueError(f"tag {tag} outside 0..{_MAX_TAG}")
        payload = arr.tobytes() if canonical else self._slow_pack(arr)
        self._send_frame(dest, self._frame(0, self.rank, self.context, tag,
                                           self.element_hash, count, payload))

    def receive(self, buffer, source, tag=0, timeout=None):
        if self._poison is not None:
            raise CommunicatorPoisoned(str(self._poison))
        if type(buffer) is not np.ndarray:
            raise UnsupportedType(
                f"receive buffers must be writable numpy arrays, got {type(buffer).__name__}")
        capacity, canonical = self._lookup(buffer)
        flags = buffer.flags
        if not flags.writeable:
            raise ValueError("receive buffer is read-only")
        if not 0 <= source < self.world_size:
            raise InvalidDestination(source, self.world_size)
        if not 0 <= tag <= _MAX_TAG:
            raise ValueError(f"tag {tag} outside 0..{_MAX_TAG}")

        frame = self._recv_match(0, source, self.context, tag, timeout)
        if frame[4] != self.element_hash:
            self._poison = TypeConfusion(self.element_hash, frame[4])
            raise self._poison
        count = frame[5]
        if count > capacity:
            raise Truncation(count, capacity)
        payload = frame[6]
        nbytes = count * self.element_size
        if len(payload) != nbytes:
            raise PayloadSizeMismatch(nbytes, len(payload))
        if self._has_bool:
            self._check_bools(payload)
        if canonical and flags.c_contiguous:
            memoryview(buffer).cast("B")[:nbytes] = payload
        else:
            self._slow_write(buffer, payload, nbytes)
        return ReceiveStatus(source, tag, count)
