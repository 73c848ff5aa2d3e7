"""Element type descriptors, flat signatures and the congruence relation.

A descriptor is a tree of fundamentals, fixed-length arrays and records.
Flattening walks it depth first and yields the sequence of fundamental kinds;
two types are congruent when those sequences are identical. Field names and
nesting shape never matter, so a 3x2 float32 matrix is congruent with a 2x3
one but a float32 is not congruent with an int32 even though both are 4 bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property
from typing import Iterator, Union

import numpy as np

from . import _kernels
from .errors import NotAMultiple, UnsupportedType


class FundamentalKind(IntEnum):
    """Scalar kinds. Codes are part of wire format version 1 and never change."""

    I8 = 1
    I16 = 2
    I32 = 3
    I64 = 4
    U8 = 5
    U16 = 6
    U32 = 7
    U64 = 8
    F32 = 9
    F64 = 10
    BOOL = 11

    @property
    def width(self) -> int:
        return _WIDTHS[self]

    @property
    def dtype(self) -> np.dtype:
        return _KIND_DTYPES[self]

    def __str__(self) -> str:
        return self.name


_WIDTHS = {
    FundamentalKind.I8: 1, FundamentalKind.I16: 2, FundamentalKind.I32: 4, FundamentalKind.I64: 8,
    FundamentalKind.U8: 1, FundamentalKind.U16: 2, FundamentalKind.U32: 4, FundamentalKind.U64: 8,
    FundamentalKind.F32: 4, FundamentalKind.F64: 8, FundamentalKind.BOOL: 1,
}
_KIND_DTYPES: dict[FundamentalKind, np.dtype] = {
    FundamentalKind.I8: np.dtype("i1"), FundamentalKind.I16: np.dtype("<i2"),
    FundamentalKind.I32: np.dtype("<i4"), FundamentalKind.I64: np.dtype("<i8"),
    FundamentalKind.U8: np.dtype("u1"), FundamentalKind.U16: np.dtype("<u2"),
    FundamentalKind.U32: np.dtype("<u4"), FundamentalKind.U64: np.dtype("<u8"),
    FundamentalKind.F32: np.dtype("<f4"), FundamentalKind.F64: np.dtype("<f8"),
    FundamentalKind.BOOL: np.dtype("?"),
}
# translate table: code -> width; non-codes map to 0
_WIDTH_BY_CODE = bytes([0] + [_WIDTHS[FundamentalKind(c)] for c in range(1, 12)] + [0] * 244)
_VALID_CODES = bytes(range(1, 12))
_COUNT = struct.Struct("<I")


@dataclass(frozen=True)
class FlatSignature:
    """Depth-first sequence of fundamental kinds, stored as one code byte each."""

    codes: bytes

    def __post_init__(self) -> None:
        if not isinstance(self.codes, bytes):
            object.__setattr__(self, "codes", bytes(self.codes))
        if self.codes.translate(None, _VALID_CODES):
            raise ValueError(f"invalid kind code in {self.codes!r}")

    @classmethod
    def of(cls, *kinds: FundamentalKind) -> FlatSignature:
        return cls(bytes(int(k) for k in kinds))

    @classmethod
    def from_canonical(cls, data: bytes) -> FlatSignature:
        """Inverse of :func:`canonical_bytes`. Rejects trailing or missing bytes."""
        if len(data) < 4:
            raise ValueError("canonical signature shorter than its count prefix")
        (n,) = _COUNT.unpack_from(data)
        if len(data) != 4 + n:
            raise ValueError(f"canonical signature declares {n} components, has {len(data) - 4}")
        return cls(bytes(data[4:]))

    @property
    def kinds(self) -> tuple[FundamentalKind, ...]:
        return tuple(FundamentalKind(c) for c in self.codes)

    @cached_property
    def byte_size(self) -> int:
        return sum(self.codes.translate(_WIDTH_BY_CODE))

    def __len__(self) -> int:
        return len(self.codes)

    def __iter__(self) -> Iterator[FundamentalKind]:
        return iter(self.kinds)

    def __str__(self) -> str:
        names = [FundamentalKind(c).name for c in self.codes[:32]]
        if len(self.codes) > 32:
            names.append(f"... +{len(self.codes) - 32}")
        return "[" + ", ".join(names) + "]"

    def __repr__(self) -> str:
        return f"FlatSignature({self})"


class TypeDescriptor:
    """Base class of :class:`Fundamental`, :class:`ArrayOf` and :class:`Record`."""

    __slots__ = ()

    @property
    def signature(self) -> FlatSignature:
        raise NotImplementedError

    @property
    def dtype(self) -> np.dtype:
        """Canonical numpy dtype: little-endian, packed, fields in declared order."""
        raise NotImplementedError

    def depth(self) -> int:
        raise NotImplementedError


@dataclass(frozen=True)
class Fundamental(TypeDescriptor):
    kind: FundamentalKind

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", FundamentalKind(self.kind))

    @cached_property
    def signature(self) -> FlatSignature:
        return FlatSignature(bytes([self.kind]))

    @property
    def dtype(self) -> np.dtype:
        return self.kind.dtype

    def depth(self) -> int:
        return 1


@dataclass(frozen=True)
class ArrayOf(TypeDescriptor):
    element: TypeDescriptor
    length: int

    def __post_init__(self) -> None:
        if not isinstance(self.element, TypeDescriptor):
            raise TypeError(f"array element must be a TypeDescriptor, got {self.element!r}")
        if int(self.length) < 1:
            raise ValueError(f"array length must be >= 1, got {self.length}")
        object.__setattr__(self, "length", int(self.length))

    @cached_property
    def signature(self) -> FlatSignature:
        return FlatSignature(self.element.signature.codes * self.length)

    @cached_property
    def dtype(self) -> np.dtype:
        return np.dtype((self.element.dtype, (self.length,)))

    def depth(self) -> int:
        return 1 + self.element.depth()


@dataclass(frozen=True)
class Record(TypeDescriptor):
    fields: tuple[tuple[str, TypeDescriptor], ...]

    def __post_init__(self) -> None:
        fields = tuple((name, desc) for name, desc in self.fields)
        if not fields:
            raise ValueError("record must have at least one field")
        names = [name for name, _ in fields]
        for name, desc in fields:
            if not isinstance(name, str) or not name.isidentifier():
                raise ValueError(f"record field name {name!r} is not an identifier")
            if not isinstance(desc, TypeDescriptor):
                raise TypeError(f"field {name!r} must be a TypeDescriptor, got {desc!r}")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate field names in {names}")
        object.__setattr__(self, "fields", fields)

    @cached_property
    def signature(self) -> FlatSignature:
        return FlatSignature(b"".join(desc.signature.codes for _, desc in self.fields))

    @cached_property
    def dtype(self) -> np.dtype:
        return np.dtype([(name, desc.dtype) for name, desc in self.fields])

    def depth(self) -> int:
        return 1 + max(desc.depth() for _, desc in self.fields)


def record(**fields: TypeDescriptor) -> Record:
    """``record(a=Fundamental(I32), b=...)`` with fields in keyword order."""
    return Record(tuple(fields.items()))


def flatten(descriptor: TypeDescriptor) -> FlatSignature:
    return descriptor.signature


def congruent(a: FlatSignature, b: FlatSignature) -> bool:
    return a.codes == b.codes


def canonical_bytes(sig: FlatSignature) -> bytes:
    """u32 little-endian component count, then one code byte per component."""
    return _COUNT.pack(len(sig.codes)) + sig.codes


def signature_hash(sig: FlatSignature) -> int:
    """64-bit FNV-1a over :func:`canonical_bytes`."""
    return _kernels.fnv1a64(canonical_bytes(sig))


def byte_size(sig: FlatSignature) -> int:
    return sig.byte_size


def element_multiplicity(buffer_sig: FlatSignature, element_sig: FlatSignature) -> int:
    """Number of whole ``element_sig`` copies that make up ``buffer_sig``.

    Raises :class:`NotAMultiple` unless ``buffer_sig`` is n >= 1 copies.
    """
    if not element_sig.codes:
        raise ValueError("element signature must be nonempty")
    n = _kernels.repeat_count(buffer_sig.codes, element_sig.codes)
    if n == 0:
        raise NotAMultiple(buffer_sig, element_sig)
    return n


def repeated_multiplicity(item_codes: bytes, items: int, element_codes: bytes) -> int:
    """:func:`element_multiplicity` of ``item_codes * items`` without building it.

    Position i of the repeated sequence pairs item code ``i mod len(item)``
    with element code ``i mod len(element)``; that pairing repeats with period
    lcm(len(item), len(element)), so only that many positions need checking.
    Returns 0 when the sequence is not a whole multiple.
    """
    d, e = len(item_codes), len(element_codes)
    total = d * items
    if total == 0 or total % e:
        return 0
    span = min(total, d * e // _gcd(d, e))
    reps = -(-span // d)
    if _kernels.repeat_count((item_codes * reps)[:span], element_codes) == 0:
        return 0
    return total // e


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a


# -- numpy bridge -------------------------------------------------------------

_DTYPE_KINDS = {
    ("i", 1): FundamentalKind.I8, ("i", 2): FundamentalKind.I16,
    ("i", 4): FundamentalKind.I32, ("i", 8): FundamentalKind.I64,
    ("u", 1): FundamentalKind.U8, ("u", 2): FundamentalKind.U16,
    ("u", 4): FundamentalKind.U32, ("u", 8): FundamentalKind.U64,
    ("f", 4): FundamentalKind.F32, ("f", 8): FundamentalKind.F64,
    ("b", 1): FundamentalKind.BOOL,
}

DescriptorLike = Union[TypeDescriptor, np.dtype, type, str, FundamentalKind]


def descriptor_from_dtype(dtype: np.dtype) -> TypeDescriptor:
    """Descriptor of one item of ``dtype``. Byte order and padding are ignored."""
    dtype = np.dtype(dtype)
    if dtype.subdtype is not None:
        base, shape = dtype.subdtype
        desc = descriptor_from_dtype(base)
        for dim in reversed(shape):
            desc = ArrayOf(desc, dim)
        return desc
    fields = dtype.fields
    if fields is not None and dtype.names is not None:
        return Record(tuple(
            (name, descriptor_from_dtype(fields[name][0])) for name in dtype.names
        ))
    kind = _DTYPE_KINDS.get((dtype.kind, dtype.itemsize))
    if kind is None:
        raise UnsupportedType(f"numpy dtype {dtype} has no fundamental kind")
    return Fundamental(kind)


def as_descriptor(obj: DescriptorLike) -> TypeDescriptor:
    """Accept a descriptor, a kind, or anything ``np.dtype`` understands."""
    if isinstance(obj, TypeDescriptor):
        return obj
    if isinstance(obj, FundamentalKind):
        return Fundamental(obj)
    try:
        dtype = np.dtype(obj)
    except TypeError as exc:
        raise UnsupportedType(f"cannot describe {obj!r} as an element type") from exc
    return descriptor_from_dtype(dtype)

