"""Frame encoding, wire format version 1.

Header layout, all integers little-endian, 43 bytes::

    magic "TMPC" | version u16 | kind u8 | source u32 | context u32 | tag u32
    | type_hash u64 | element_count u64 | payload_length u64

followed by ``payload_length`` payload bytes.
"""

from __future__ import annotations

import struct
from enum import IntEnum
from typing import NamedTuple

from . import _kernels
from .errors import BadMagic, FrameError, InvalidKind, TruncatedFrame, UnsupportedVersion

MAGIC = b"TMPC"
VERSION = 1
HEADER_SIZE = 43


class FrameKind(IntEnum):
    DATA = 0
    HANDSHAKE_DESCRIPTOR = 1
    HANDSHAKE_VERDICT = 2


DATA = FrameKind.DATA
HANDSHAKE_DESCRIPTOR = FrameKind.HANDSHAKE_DESCRIPTOR
HANDSHAKE_VERDICT = FrameKind.HANDSHAKE_VERDICT
_KINDS = frozenset(int(k) for k in FrameKind)


class Frame(NamedTuple):
    kind: int
    source: int
    context: int
    tag: int
    type_hash: int
    element_count: int
    payload: bytes = b""

    @property
    def wire_size(self) -> int:
        return HEADER_SIZE + len(self.payload)


def encode_header(f: Frame) -> bytes:
    if f.kind not in _KINDS:
        raise InvalidKind(f"unknown frame kind {f.kind}")
    try:
        return _kernels.pack_header(
            MAGIC, VERSION, f.kind, f.source, f.context, f.tag,
            f.type_hash, f.element_count, len(f.payload),
        )
    except (OverflowError, TypeError, ValueError, struct.error) as exc:
        raise FrameError(f"header field out of range in {f[:6]}: {exc}", field="header") from exc


def encode_frame(f: Frame) -> bytes:
    return encode_header(f) + bytes(f.payload)


def decode_header(buf) -> tuple[int, int, int, int, int, int, int]:
    """Validate and unpack a header.

    Returns ``(kind, source, context, tag, type_hash, element_count, payload_length)``.
    """
    if len(buf) < HEADER_SIZE:
        raise TruncatedFrame(f"{len(buf)} bytes, header needs {HEADER_SIZE}", field="header")
    magic, version, kind, source, context, tag, type_hash, count, length = \
        _kernels.unpack_header(buf)
    if magic != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, got {magic!r}")
    if version != VERSION:
        raise UnsupportedVersion(f"version {version} (supported: {VERSION})")
    if kind not in _KINDS:
        raise InvalidKind(f"unknown frame kind {kind}")
    return kind, source, context, tag, type_hash, count, length


def decode_frame(data) -> Frame:
    """Inverse of :func:`encode_frame`.

    ``data`` must hold exactly one frame; bytes past the declared payload are
    rejected rather than silently dropped.
    """
    data = bytes(data)
    kind, source, context, tag, type_hash, count, length = decode_header(data)
    available = len(data) - HEADER_SIZE
    if available < length:
        raise TruncatedFrame(f"declares {length} payload bytes, {available} present")
    if available > length:
        raise FrameError(f"{available - length} bytes after the declared payload",
                         field="payload_length")
    return Frame(kind, source, context, tag, type_hash, count, data[HEADER_SIZE:])
