"""Exception hierarchy.

Everything raised on purpose by this package derives from :class:`TmpcError`.
"""


class TmpcError(Exception):
    pass


# -- type model ---------------------------------------------------------------

class UnsupportedType(TmpcError, TypeError):
    """A host type (numpy dtype, Python object) has no descriptor equivalent."""


class NotAMultiple(TmpcError, ValueError):
    """A buffer signature is not a whole repetition of an element signature."""

    def __init__(self, buffer_signature, element_signature):
        self.buffer_signature = buffer_signature
        self.element_signature = element_signature
        super().__init__(
            f"buffer signature {buffer_signature} is not a whole number of "
            f"{element_signature} elements"
        )


# -- wire format --------------------------------------------------------------

class FrameError(TmpcError, ValueError):
    """Malformed frame bytes. ``field`` names the header field that failed."""

    field = ""

    def __init__(self, message, field=None):
        if field is not None:
            self.field = field
        super().__init__(f"{self.field}: {message}")


class BadMagic(FrameError):
    field = "magic"


class UnsupportedVersion(FrameError):
    field = "version"


class TruncatedFrame(FrameError):
    field = "payload_length"


class InvalidKind(FrameError):
    field = "kind"


# -- transport ----------------------------------------------------------------

class TransportError(TmpcError):
    pass


class InvalidDestination(TransportError, ValueError):
    def __init__(self, dest, world_size):
        self.dest = dest
        self.world_size = world_size
        super().__init__(f"rank {dest} is outside a world of size {world_size}")


class ConnectionLost(TransportError):
    """A peer link failed. Fatal for the world."""


class WorldShutdown(TransportError):
    """The world was torn down while an operation was blocked."""


class Timeout(TransportError, TimeoutError):
    """A rendezvous or receive deadline expired."""


class DuplicateRank(TransportError):
    def __init__(self, rank):
        self.rank = rank
        super().__init__(f"rank {rank} was claimed by more than one process")


class RendezvousError(TransportError):
    """Rendezvous rejected for a reason other than a duplicate rank."""


# -- communicator -------------------------------------------------------------

class CommunicatorError(TmpcError):
    pass


class CreationError(CommunicatorError):
    """Element types disagree across ranks; raised on every rank of the world.

    ``local_signature`` is this rank's signature. ``remote_signature`` is the
    signature it conflicts with: the offender's on every other rank, rank 0's
    on the offending rank itself.
    """

    def __init__(self, offending_rank, local_signature, remote_signature,
                 offending_signature, reference_signature):
        self.offending_rank = offending_rank
        self.local_signature = local_signature
        self.remote_signature = remote_signature
        self.offending_signature = offending_signature
        self.reference_signature = reference_signature
        super().__init__(
            f"creation failed: rank {offending_rank} signature {offending_signature} "
            f"incongruent with {reference_signature}"
        )


class ShapeMismatch(CommunicatorError, TypeError):
    """A buffer does not hold a whole number of the communicator's elements."""


class Truncation(CommunicatorError):
    """Incoming message carries more elements than the receive buffer holds.

    The message has been consumed.
    """

    def __init__(self, sent_count, capacity):
        self.sent_count = sent_count
        self.capacity = capacity
        super().__init__(f"message of {sent_count} elements exceeds capacity {capacity}")


class TypeConfusion(CommunicatorError):
    """Frame header hash differs from the communicator's. Poisons the communicator."""

    def __init__(self, expected_hash, got_hash):
        self.expected_hash = expected_hash
        self.got_hash = got_hash
        super().__init__(f"type hash {got_hash:#018x} does not match {expected_hash:#018x}")


class CommunicatorPoisoned(CommunicatorError):
    """Operation on a communicator that previously hit :class:`TypeConfusion`."""


class PayloadError(CommunicatorError, ValueError):
    pass


class PayloadSizeMismatch(PayloadError):
    def __init__(self, expected, got):
        self.expected = expected
        self.got = got
        super().__init__(f"payload has {got} bytes, expected {expected}")


class InvalidBool(PayloadError):
    def __init__(self, offset, value):
        self.offset = offset
        self.value = value
        super().__init__(f"byte {value:#04x} at payload offset {offset} is not a valid BOOL")
