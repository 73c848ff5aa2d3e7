import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import close_all, raise_first, run_ranks, tcp_world
from tmpc import (
    ArrayOf, CommunicatorPoisoned, CreationError, FlatSignature, Frame, Fundamental,
    FundamentalKind as K, InvalidBool, InvalidDestination, PayloadSizeMismatch, ShapeMismatch,
    Truncation, TypeConfusion, TypedCommunicator, UnsupportedType, decode_frame, encode_frame,
    descriptor_from_dtype, record, signature_hash, spawn_inproc_world,
)
from tmpc.wire import DATA, HANDSHAKE_DESCRIPTOR, HANDSHAKE_VERDICT

F32 = FlatSignature.of(K.F32)
I32 = FlatSignature.of(K.I32)


def create_all(eps, element_for_rank):
    return run_ranks(eps, lambda ep: TypedCommunicator.create(ep, element_for_rank(ep.rank)))


def comms(eps, element):
    return raise_first(create_all(eps, lambda r: element))


def test_create_assigns_same_context(make_world):
    eps = make_world(3)
    cs = comms(eps, np.float32)
    assert {c.context for c in cs} == {1}
    assert [c.rank for c in cs] == [0, 1, 2]
    assert all(c.element_signature == F32 and c.element_hash == signature_hash(F32) for c in cs)
    again = comms(eps, np.float64)
    assert {c.context for c in again} == {2}


def test_single_rank_world():
    (ep,) = spawn_inproc_world(1)
    c = TypedCommunicator.create(ep, np.int16)
    assert ep.sent_frames == [0, 0, 0]
    c.send(np.arange(3, dtype=np.int16), 0, 5)
    out = np.zeros(3, np.int16)
    assert tuple(c.receive(out, 0, 5)) == (0, 5, 3)
    assert out.tolist() == [0, 1, 2]


def test_mismatch_on_every_rank(make_world):
    eps = make_world(3)
    results = create_all(eps, lambda r: np.int32 if r == 1 else np.float32)
    assert all(isinstance(e, CreationError) for e in results)
    for rank, err in enumerate(results):
        assert err.offending_rank == 1
        assert err.offending_signature == I32 and err.reference_signature == F32
        local, remote = (I32, F32) if rank == 1 else (F32, I32)
        assert (err.local_signature, err.remote_signature) == (local, remote)
        assert "rank 1" in str(err)


def test_lowest_offending_rank_reported():
    eps = spawn_inproc_world(4)
    results = create_all(eps, lambda r: {2: np.int8, 3: np.int16}.get(r, np.uint8))
    assert {e.offending_rank for e in results} == {2}


def test_world_usable_after_failed_creation():
    eps = spawn_inproc_world(2)
    create_all(eps, lambda r: np.int32 if r else np.float32)
    a, b = comms(eps, np.float32)
    a.send(np.float32(1.5), 1)
    out = np.zeros(1, np.float32)
    b.receive(out, 0)
    assert out[0] == 1.5
    assert eps[0].pending() == [] and eps[1].pending() == []


def test_reshape_roundtrip(make_world):
    a, b = comms(make_world(2), np.float32)
    x = np.arange(1, 7, dtype=np.float32).reshape(3, 2)
    a.send(x, 1, 0)
    y = np.zeros((2, 3), np.float32)
    status = b.receive(y, 0, 0)
    assert (status.source, status.tag, status.count) == (0, 0, 6)
    assert y.ravel().tolist() == x.ravel().tolist()


def test_nested_descriptor_reshape():
    # element [[f32; 2]; 3] sent as a (6,) array, received as (3, 2)
    a, b = comms(spawn_inproc_world(2), ArrayOf(ArrayOf(Fundamental(K.F32), 2), 3))
    a.send(np.arange(12, dtype=np.float32), 1)
    y = np.zeros((2, 3, 2), np.float32)
    assert b.receive(y, 0).count == 2
    assert y.ravel().tolist() == list(range(12))


def test_truncation_consumes_and_mailbox_stays_usable(make_world):
    a, b = comms(make_world(2), np.float32)
    a.send(np.ones(6, np.float32), 1, 3)
    a.send(np.full(2, 7, np.float32), 1, 3)
    small = np.zeros(4, np.float32)
    with pytest.raises(Truncation) as err:
        b.receive(small, 0, 3)
    assert (err.value.sent_count, err.value.capacity) == (6, 4)
    assert small.tolist() == [0, 0, 0, 0]
    assert b.receive(small, 0, 3).count == 2
    assert small.tolist() == [7, 7, 0, 0]


def test_short_message_fills_front():
    a, b = comms(spawn_inproc_world(2), np.int32)
    a.send(np.array([5, 6], np.int32), 1)
    buf = np.full(4, -1, np.int32)
    assert b.receive(buf, 0).count == 2
    assert buf.tolist() == [5, 6, -1, -1]


def test_data_frame_contents():
    eps = spawn_inproc_world(2)
    a, b = comms(eps, np.float32)
    seen = []
    eps[0].taps.append(lambda dest, f: seen.append(encode_frame(f)))
    a.send(np.float32(1.0), 1, 9)
    (wire,) = seen
    assert len(wire) == 43 + 4
    f = decode_frame(wire)
    assert f == Frame(DATA, 0, a.context, 9, signature_hash(F32), 1, bytes.fromhex("0000803f"))


def test_big_endian_and_strided_buffers_are_canonicalized():
    a, b = comms(spawn_inproc_world(2), np.int32)
    src = np.arange(10, dtype=">i4")[::2]
    a.send(src, 1)
    out = np.zeros(5, ">i4")
    b.receive(out, 0)
    assert out.tolist() == [0, 2, 4, 6, 8]
    col = np.zeros((5, 2), np.int32)[:, 1]
    a.send(np.arange(5, dtype=np.int32), 1)
    b.receive(col, 0)
    assert col.tolist() == [0, 1, 2, 3, 4]


def test_record_communicator():
    rec = record(id=Fundamental(K.I32), xy=ArrayOf(Fundamental(K.F64), 2))
    a, b = comms(spawn_inproc_world(2), rec)
    dt = np.dtype([("id", "<i4"), ("xy", "<f8", (2,))])
    data = np.array([(1, (0.5, 1.5)), (2, (2.5, 3.5))], dt)
    a.send(data, 1)
    # a congruent but differently named, padded layout
    padded = np.dtype({"names": ["k", "p"], "formats": ["<i4", ("<f8", (2,))],
                       "offsets": [0, 8], "itemsize": 24})
    out = np.zeros(2, padded)
    assert b.receive(out, 0).count == 2
    assert out["k"].tolist() == [1, 2]
    assert out["p"].tolist() == [[0.5, 1.5], [2.5, 3.5]]
    # flat i32,f64,f64 scalars are not a whole number of records
    with pytest.raises(ShapeMismatch):
        a.send(np.zeros(3, np.float64), 1)


def test_shape_mismatch_emits_nothing():
    eps = spawn_inproc_world(2)
    a, _ = comms(eps, np.float32)
    before = list(eps[0].sent_frames)
    for bad in (np.zeros(2, np.int32), np.zeros(0, np.float32), np.zeros(3, np.float64)):
        with pytest.raises(ShapeMismatch):
            a.send(bad, 1)
    assert eps[0].sent_frames == before
    with pytest.raises(ShapeMismatch):
        a.receive(np.zeros(2, np.int32), 1)


def test_argument_checks_before_emission():
    eps = spawn_inproc_world(2)
    a, _ = comms(eps, np.float32)
    before = list(eps[0].sent_frames)
    with pytest.raises(InvalidDestination):
        a.send(np.float32(1), 2)
    with pytest.raises(ValueError):
        a.send(np.float32(1), 1, -1)
    with pytest.raises(ValueError):
        a.send(np.float32(1), 1, 2**32)
    with pytest.raises(UnsupportedType):
        a.send([1.0], 1)
    with pytest.raises(UnsupportedType):
        a.receive(np.float32(0), 1)
    ro = np.zeros(1, np.float32)
    ro.flags.writeable = False
    with pytest.raises(ValueError):
        a.receive(ro, 1)
    assert eps[0].sent_frames == before


def test_unsupported_element_type():
    with pytest.raises(UnsupportedType):
        TypedCommunicator.create(spawn_inproc_world(1)[0], np.complex128)


def forged(c, dest, **kw):
    f = Frame(DATA, c.rank, c.context, 0, c.element_hash, 1, b"\x00" * c.element_size)
    c.endpoint.send_frame(dest, f._replace(**kw))


def test_type_confusion_poisons():
    a, b = comms(spawn_inproc_world(2), np.float32)
    forged(a, 1, type_hash=signature_hash(I32))
    buf = np.zeros(1, np.float32)
    with pytest.raises(TypeConfusion) as err:
        b.receive(buf, 0)
    assert err.value.got_hash == signature_hash(I32)
    assert b.poisoned
    with pytest.raises(CommunicatorPoisoned):
        b.receive(buf, 0)
    with pytest.raises(CommunicatorPoisoned):
        b.send(buf, 0)
    a.send(buf, 1)  # the sender is unaffected


def test_payload_size_mismatch():
    a, b = comms(spawn_inproc_world(2), np.float32)
    forged(a, 1, payload=b"\x00" * 3)
    with pytest.raises(PayloadSizeMismatch) as err:
        b.receive(np.zeros(1, np.float32), 0)
    assert (err.value.expected, err.value.got) == (4, 3)


def test_invalid_bool():
    rec = record(x=Fundamental(K.I16), ok=Fundamental(K.BOOL))
    a, b = comms(spawn_inproc_world(2), rec)
    forged(a, 1, element_count=2, payload=bytes([0, 0, 1, 9, 9, 2]))
    out = np.zeros(2, np.dtype([("x", "<i2"), ("ok", "?")]))
    with pytest.raises(InvalidBool) as err:
        b.receive(out, 0)
    assert (err.value.offset, err.value.value) == (5, 2)
    assert out["x"].tolist() == [0, 0]


def test_contexts_isolate_traffic():
    eps = spawn_inproc_world(2)
    a1, b1 = comms(eps, np.int32)
    a2, b2 = comms(eps, np.int32)
    a1.send(np.int32(1), 1)
    a2.send(np.int32(2), 1)
    out = np.zeros(1, np.int32)
    b2.receive(out, 0)
    assert out[0] == 2
    b1.receive(out, 0)
    assert out[0] == 1


def test_receive_timeout():
    from tmpc import Timeout
    _, b = comms(spawn_inproc_world(2), np.int32)
    with pytest.raises(Timeout):
        b.receive(np.zeros(1, np.int32), 0, timeout=0.05)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_handshake_cost(n):
    eps = spawn_inproc_world(n)
    comms(eps, np.float64)
    world = eps[0].world
    assert world.handshake_frames() == 2 * (n - 1)
    assert eps[0].sent_frames[HANDSHAKE_VERDICT] == n - 1
    assert all(ep.sent_frames[HANDSHAKE_DESCRIPTOR] == 1 for ep in eps[1:])


def test_repr():
    (c,) = comms(spawn_inproc_world(1), np.uint8)
    assert repr(c) == "<TypedCommunicator [U8] rank=0/1 context=1>"


dtypes = st.sampled_from([np.int8, np.uint16, np.int32, np.float32, np.float64, np.uint64])


@settings(max_examples=60, deadline=None)
@given(dtypes, st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1), st.data())
def test_reshape_property(dtype, p, q, tag, data):
    a, b = comms(spawn_inproc_world(2), dtype)
    info = np.iinfo(dtype) if np.dtype(dtype).kind in "iu" else None
    lo, hi = (info.min, info.max) if info else (-1e6, 1e6)
    values = data.draw(st.lists(st.integers(int(lo), int(hi)) if info else
                                st.floats(lo, hi, width=np.dtype(dtype).itemsize * 8),
                                min_size=p * q, max_size=p * q))
    x = np.array(values, dtype).reshape(p, q)
    a.send(x, 1, tag)
    y = np.zeros((q, p), dtype)
    assert tuple(b.receive(y, 0, tag)) == (0, tag, p * q)
    assert y.tobytes() == x.tobytes()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from([np.int8, np.int16, np.float32, np.float64, np.bool_]),
                min_size=1, max_size=4), st.integers(1, 5))
def test_soundness_of_congruent_records(kinds, n):
    # differently named fields of the same kinds interoperate and preserve every byte
    src_dt = np.dtype([(f"a{i}", k) for i, k in enumerate(kinds)])
    dst_dt = np.dtype([(f"z{i}", k) for i, k in enumerate(kinds)])
    a, b = comms(spawn_inproc_world(2), src_dt)
    rng = np.random.default_rng(n)
    x = np.frombuffer(rng.integers(0, 2, src_dt.itemsize * n, dtype=np.uint8).tobytes(), src_dt)
    a.send(x.copy(), 1)
    y = np.zeros(n, dst_dt)
    b.receive(y, 0)
    assert y.tobytes() == x.tobytes()


# -- payload codec -------------------------------------------------------------

from tmpc import BufferView, pack_payload, unpack_payload  # noqa: E402


def test_pack_scalar_f32():
    assert pack_payload(BufferView(np.float32(1.0), F32)) == bytes.fromhex("0000803f")
    assert pack_payload(BufferView(np.array(1.0, ">f4"), F32)) == bytes.fromhex("0000803f")


def test_unpack_errors():
    view = BufferView(np.zeros(2, np.float32), F32)
    with pytest.raises(PayloadSizeMismatch):
        unpack_payload(b"\x00" * 5, view, 1)
    with pytest.raises(Truncation):
        unpack_payload(b"\x00" * 12, view, 3)
    bview = BufferView(np.zeros(1, np.bool_), FlatSignature.of(K.BOOL))
    with pytest.raises(InvalidBool):
        unpack_payload(b"\x02", bview, 1)


ALL_DTYPES = [k.dtype for k in K]


def random_records(data, dtypes, count):
    """A structured array of ``count`` random records with well-formed BOOL bytes."""
    dt = np.dtype([(f"f{i}", d) for i, d in enumerate(dtypes)])
    raw = data.draw(st.binary(min_size=dt.itemsize * count, max_size=dt.itemsize * count))
    arr = np.frombuffer(raw, dt).copy()
    for name, d in zip(dt.names, dtypes):
        if d.kind == "b":
            arr[name] = arr[name].view(np.uint8) & 1
    return arr


record_kinds = st.lists(st.sampled_from(ALL_DTYPES), min_size=1, max_size=4)


@settings(max_examples=100, deadline=None)
@given(record_kinds, st.integers(1, 64), st.data())
def test_pack_unpack_identity(dtypes, count, data):
    src = random_records(data, dtypes, count)
    esig = descriptor_from_dtype(src.dtype).signature
    payload = pack_payload(BufferView(src, esig))
    assert len(payload) == src.dtype.itemsize * count
    dst = np.zeros(count, src.dtype)
    unpack_payload(payload, BufferView(dst, esig), count)
    assert dst.tobytes() == src.tobytes()


@pytest.fixture(scope="module", params=["inproc", "tcp"])
def shared_pair(request):
    eps = spawn_inproc_world(2) if request.param == "inproc" else tcp_world(2)
    yield eps
    close_all(eps)


@settings(max_examples=40, deadline=None)
@given(record_kinds, st.integers(1, 64), st.data())
def test_roundtrip_identity(shared_pair, dtypes, count, data):
    # each example creates a fresh communicator (new context) on the shared world
    src = random_records(data, dtypes, count)
    a, b = comms(shared_pair, src.dtype)
    a.send(src, 1, 11)
    dst = np.zeros(count, src.dtype)
    assert b.receive(dst, 0, 11, timeout=10).count == count
    assert dst.tobytes() == src.tobytes()


@settings(max_examples=30, deadline=None)
@given(record_kinds, st.integers(2, 5), st.data())
def test_handshake_soundness(dtypes, n, data):
    family = np.dtype([(f"f{i}", d) for i, d in enumerate(dtypes)])
    # congruent variants: renamed fields, big-endian storage
    variants = [family, np.dtype([(f"g{i}", d) for i, d in enumerate(dtypes)]),
                np.dtype([(f"h{i}", d.newbyteorder(">")) for i, d in enumerate(dtypes)])]
    picks = data.draw(st.lists(st.sampled_from(variants), min_size=n, max_size=n))
    eps = spawn_inproc_world(n)
    created = raise_first(run_ranks(eps, lambda ep: TypedCommunicator.create(ep, picks[ep.rank])))
    assert {c.context for c in created} == {1}

    bad_rank = data.draw(st.integers(1, n - 1))
    perturbed = np.dtype([(f"f{i}", d) for i, d in enumerate(dtypes)] + [("extra", np.uint8)])
    results = run_ranks(eps, lambda ep: TypedCommunicator.create(
        ep, perturbed if ep.rank == bad_rank else picks[ep.rank]))
    assert all(isinstance(e, CreationError) and e.offending_rank == bad_rank for e in results)
