"""Communicators specialized to one element type.

Creation is collective and runs a one-time handshake on context 0: every
rank reports its flattened element signature to rank 0, which checks
congruence and answers with either a fresh context id or the lowest
offending rank. After that, DATA frames carry only the fixed header and the
canonical payload.

Buffers are numpy arrays or numpy scalars. Anything whose flattened
signature is a whole number of element signatures goes through the same
:meth:`TypedCommunicator.send`: a scalar, a flat array, a nested array, a
structured array. Under a static type checker ``TypedCommunicator[T]`` only
admits ``T`` scalars and ``NDArray[T]`` buffers.
"""

from __future__ import annotations

import struct
from array import array
from typing import TYPE_CHECKING, Any, Generic, NamedTuple, TypeVar, Union, overload

import numpy as np
import numpy.typing as npt

from . import _kernels
from .errors import (
    CreationError, InvalidBool, PayloadSizeMismatch, ShapeMismatch, Truncation,
    UnsupportedType,
)
from .transport.base import Endpoint
from .typemodel import (
    DescriptorLike, FlatSignature, FundamentalKind, TypeDescriptor, as_descriptor,
    canonical_bytes, congruent, descriptor_from_dtype, repeated_multiplicity, signature_hash,
)
from .wire import DATA, HANDSHAKE_DESCRIPTOR, HANDSHAKE_VERDICT, Frame

T = TypeVar("T", bound=np.generic)

BOOTSTRAP_CONTEXT = 0
_U32 = struct.Struct("<I")
_MAX_U32 = 0xFFFFFFFF
_VERDICT_OK = 0
_VERDICT_MISMATCH = 1


ReceiveStatus = _kernels.ReceiveStatus


# -- buffer views -------------------------------------------------------------

class _Layout(NamedTuple):
    item_signature: FlatSignature
    canonical: bool  # dtype bytes are already canonical (little-endian, packed)
    canonical_dtype: np.dtype


_layouts: dict[np.dtype, _Layout] = {}


def _layout(dtype: np.dtype) -> _Layout:
    lay = _layouts.get(dtype)
    if lay is None:
        desc = descriptor_from_dtype(dtype)
        canon = desc.dtype
        lay = _Layout(desc.signature, dtype == canon and _is_little(dtype), canon)
        _layouts[dtype] = lay
    return lay


def _is_little(dtype: np.dtype) -> bool:
    if dtype.fields is not None:
        return all(_is_little(f[0]) for f in dtype.fields.values())
    if dtype.subdtype is not None:
        return _is_little(dtype.subdtype[0])
    return dtype.byteorder in ("<", "|") or (dtype.byteorder == "=" and np.little_endian)


def _as_array(buffer) -> np.ndarray:
    if isinstance(buffer, np.ndarray):
        return buffer
    if isinstance(buffer, np.generic):
        return np.asarray(buffer)
    raise UnsupportedType(
        f"buffers must be numpy arrays or numpy scalars, got {type(buffer).__name__}"
    )


class BufferView:
    """A caller buffer seen through one communicator element type.

    ``count`` is the number of whole elements the buffer holds; it is the
    element count on send and the capacity on receive.
    """

    __slots__ = ("array", "item_signature", "items", "count", "element_signature", "layout")

    def __init__(self, buffer, element_signature: FlatSignature):
        arr = _as_array(buffer)
        lay = _layout(arr.dtype)
        n = repeated_multiplicity(lay.item_signature.codes, arr.size, element_signature.codes)
        if n == 0:
            raise ShapeMismatch(
                f"buffer of {arr.size} x {lay.item_signature} is not a whole number "
                f"of {element_signature} elements")
        self.array = arr
        self.layout = lay
        self.item_signature = lay.item_signature
        self.items = arr.size
        self.count = n
        self.element_signature = element_signature

    @property
    def signature(self) -> FlatSignature:
        """Flattened signature of the whole buffer (materialized on demand)."""
        return FlatSignature(self.item_signature.codes * self.items)

    @property
    def nbytes(self) -> int:
        return self.items * self.item_signature.byte_size


def pack_payload(view: BufferView) -> bytes:
    """Canonical bytes: flatten order, little-endian, no padding."""
    arr = view.array
    if view.layout.canonical:
        return arr.tobytes()
    return arr.astype(view.layout.canonical_dtype).tobytes()


def _bool_offsets(sig: FlatSignature) -> array:
    offsets, pos = array("I"), 0
    for code in sig.codes:
        if code == FundamentalKind.BOOL:
            offsets.append(pos)
        pos += FundamentalKind(code).width
    return offsets


def check_bools(payload: bytes, sig: FlatSignature) -> None:
    """Raise :class:`InvalidBool` if any BOOL component byte is not 0 or 1."""
    if FundamentalKind.BOOL not in sig.codes:
        return
    bad = _kernels.find_bad_bool(payload, sig.byte_size, _bool_offsets(sig))
    if bad >= 0:
        raise InvalidBool(bad, payload[bad])


def _slow_pack(arr: np.ndarray) -> bytes:
    return arr.astype(_layouts[arr.dtype].canonical_dtype).tobytes()


def _write_front(arr: np.ndarray, lay: _Layout, payload: bytes, nbytes: int) -> None:
    if lay.canonical and arr.flags.c_contiguous:
        memoryview(arr).cast("B")[:nbytes] = payload  # type: ignore[arg-type]
        return
    staged = np.ascontiguousarray(arr.astype(lay.canonical_dtype))
    memoryview(staged).cast("B")[:nbytes] = payload  # type: ignore[arg-type]
    arr[...] = staged


def unpack_payload(payload: bytes, view: BufferView, count: int) -> None:
    """Write ``count`` elements of canonical bytes into the front of the buffer."""
    esig = view.element_signature
    expected = count * esig.byte_size
    if len(payload) != expected:
        raise PayloadSizeMismatch(expected, len(payload))
    if count > view.count:
        raise Truncation(count, view.count)
    check_bools(payload, esig)
    if not view.array.flags.writeable:
        raise ValueError("receive buffer is read-only")
    _write_front(view.array, view.layout, payload, expected)


# -- communicator -------------------------------------------------------------

class TypedCommunicator(_kernels.CommunicatorCore, Generic[T]):
    """Point-to-point communicator bound to one element type.

    Build one with :meth:`create`, collectively on every rank. ``send`` and
    ``receive`` are provided by the compiled core when available.
    """

    def __init__(self, endpoint: Endpoint, descriptor: TypeDescriptor, context: int):
        sig = descriptor.signature
        has_bool = FundamentalKind.BOOL in sig.codes
        super().__init__(
            endpoint, context, signature_hash(sig), sig.byte_size, has_bool, Frame,
            self._resolve, _slow_pack, self._slow_write, self._check_bools,
        )
        self.element_descriptor = descriptor
        self.element_signature = sig

    if TYPE_CHECKING:
        rank: int
        world_size: int
        context: int
        element_hash: int
        element_size: int
        endpoint: Endpoint
        poisoned: bool

        def send(self, buffer: Union[npt.NDArray[T], T], dest: int, tag: int = 0) -> None:
            """Send one message holding every element of ``buffer``.

            Returns once the frame is handed to the transport. Shape, tag and
            destination are checked before anything is emitted.
            """

        def receive(self, buffer: npt.NDArray[T], source: int, tag: int = 0,
                    timeout: float | None = None) -> ReceiveStatus:
            """Receive the earliest matching message into the front of ``buffer``.

            Raises :class:`Truncation` (message consumed) if it carries more
            elements than ``buffer`` holds, and :class:`TypeConfusion` (which
            poisons this communicator) if its header hash is foreign.
            """

    def _resolve(self, arr: np.ndarray) -> tuple[int, bool]:
        view = self.view(arr)
        return view.count, view.layout.canonical

    def _slow_write(self, arr: np.ndarray, payload: bytes, nbytes: int) -> None:
        _write_front(arr, _layouts[arr.dtype], payload, nbytes)

    def _check_bools(self, payload: bytes) -> None:
        check_bools(payload, self.element_signature)

    def view(self, buffer) -> BufferView:
        """Check ``buffer`` against the element type. Raises :class:`ShapeMismatch`."""
        return BufferView(buffer, self.element_signature)

    @overload
    @classmethod
    def create(cls, endpoint: Endpoint, element: type[T]) -> TypedCommunicator[T]: ...

    @overload
    @classmethod
    def create(cls, endpoint: Endpoint, element: DescriptorLike) -> TypedCommunicator[Any]: ...

    @classmethod
    def create(cls, endpoint, element):
        """Collective constructor; raises :class:`CreationError` on every rank
        if any rank's element type is not congruent with rank 0's."""
        descriptor = as_descriptor(element)
        sig = descriptor.signature
        seq = endpoint.creation_seq
        endpoint.creation_seq += 1
        tag = seq & _MAX_U32
        n = endpoint.world_size

        if n == 1:
            return cls(endpoint, descriptor, _allocate_context(endpoint))

        if endpoint.rank != 0:
            endpoint.send_frame(0, Frame(HANDSHAKE_DESCRIPTOR, endpoint.rank, BOOTSTRAP_CONTEXT,
                                         tag, signature_hash(sig), len(sig), canonical_bytes(sig)))
            verdict = endpoint.recv_match(HANDSHAKE_VERDICT, 0, BOOTSTRAP_CONTEXT, tag)
            return cls._from_verdict(endpoint, descriptor, verdict.payload)

        offending = None
        for r in range(1, n):
            frame = endpoint.recv_match(HANDSHAKE_DESCRIPTOR, r, BOOTSTRAP_CONTEXT, tag)
            remote = FlatSignature.from_canonical(frame.payload)
            if offending is None and not congruent(sig, remote):
                offending = (r, remote)
        if offending is None:
            context = _allocate_context(endpoint)
            payload = bytes([_VERDICT_OK]) + _U32.pack(context)
        else:
            bad_rank, bad_sig = offending
            # trailing root signature lets the offending rank name what it conflicts with
            payload = (bytes([_VERDICT_MISMATCH]) + _U32.pack(bad_rank)
                       + canonical_bytes(bad_sig) + canonical_bytes(sig))
        root_hash = signature_hash(sig)
        for r in range(1, n):
            endpoint.send_frame(r, Frame(HANDSHAKE_VERDICT, 0, BOOTSTRAP_CONTEXT, tag,
                                         root_hash, 0, payload))
        if offending is not None:
            raise CreationError(bad_rank, sig, bad_sig, bad_sig, sig)
        return cls(endpoint, descriptor, context)

    @classmethod
    def _from_verdict(cls, endpoint, descriptor, payload):
        sig = descriptor.signature
        status = payload[0]
        if status == _VERDICT_OK:
            (context,) = _U32.unpack_from(payload, 1)
            endpoint.next_context = max(endpoint.next_context, context + 1)
            return cls(endpoint, descriptor, context)
        if status != _VERDICT_MISMATCH:
            raise ValueError(f"unknown verdict status {status}")
        (bad_rank,) = _U32.unpack_from(payload, 1)
        (n_bad,) = _U32.unpack_from(payload, 5)
        end = 9 + n_bad
        bad_sig = FlatSignature.from_canonical(payload[5:end])
        root_sig = FlatSignature.from_canonical(payload[end:]) if len(payload) > end else None
        if bad_rank == endpoint.rank:
            remote = root_sig
        else:
            remote = bad_sig
        raise CreationError(bad_rank, sig, remote, bad_sig, root_sig if root_sig is not None else sig)

    def __repr__(self) -> str:
        return (f"<TypedCommunicator {self.element_signature} rank={self.rank}/"
                f"{self.world_size} context={self.context}>")


def _allocate_context(endpoint: Endpoint) -> int:
    context = endpoint.next_context
    if context > _MAX_U32:
        raise OverflowError("context ids exhausted")
    endpoint.next_context = context + 1
    return context
