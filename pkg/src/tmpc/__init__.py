"""Typed point-to-point message passing.

Every :class:`TypedCommunicator` is bound to one element type. Ranks agree on
that type once, at creation, and each message afterwards carries only a fixed
header plus canonical payload bytes.
"""

from .communicator import (
    BufferView, ReceiveStatus, TypedCommunicator, check_bools, pack_payload, unpack_payload,
)
from .errors import (
    TmpcError, UnsupportedType, NotAMultiple, FrameError, BadMagic, UnsupportedVersion,
    TruncatedFrame, InvalidKind, TransportError, InvalidDestination, ConnectionLost,
    WorldShutdown, Timeout, DuplicateRank, RendezvousError, CommunicatorError,
    CreationError, ShapeMismatch, Truncation, TypeConfusion, CommunicatorPoisoned,
    PayloadError, PayloadSizeMismatch, InvalidBool,
)
from .transport import InprocWorld, connect_tcp_world, spawn_inproc_world
from .typemodel import (
    ArrayOf, FlatSignature, Fundamental, FundamentalKind, Record, TypeDescriptor,
    as_descriptor, byte_size, canonical_bytes, congruent, descriptor_from_dtype,
    element_multiplicity, flatten, record, signature_hash,
)
from .wire import Frame, FrameKind, decode_frame, encode_frame

__all__ = [
    "BufferView",
    "ReceiveStatus",
    "TypedCommunicator",
    "check_bools",
    "pack_payload",
    "unpack_payload",
    "InprocWorld",
    "connect_tcp_world",
    "spawn_inproc_world",
    "ArrayOf",
    "FlatSignature",
    "Fundamental",
    "FundamentalKind",
    "Record",
    "TypeDescriptor",
    "as_descriptor",
    "byte_size",
    "canonical_bytes",
    "congruent",
    "descriptor_from_dtype",
    "element_multiplicity",
    "flatten",
    "record",
    "signature_hash",
    "Frame",
    "FrameKind",
    "decode_frame",
    "encode_frame",
    "TmpcError",
    "UnsupportedType",
    "NotAMultiple",
    "FrameError",
    "BadMagic",
    "UnsupportedVersion",
    "TruncatedFrame",
    "InvalidKind",
    "TransportError",
    "InvalidDestination",
    "ConnectionLost",
    "WorldShutdown",
    "Timeout",
    "DuplicateRank",
    "RendezvousError",
    "CommunicatorError",
    "CreationError",
    "ShapeMismatch",
    "Truncation",
    "TypeConfusion",
    "CommunicatorPoisoned",
    "PayloadError",
    "PayloadSizeMismatch",
    "InvalidBool",
]

__version__ = "0.1.0"
