import numpy as np
import numpy.typing as npt

from tmpc import TypedCommunicator


def drain(comm: TypedCommunicator[np.uint8], out: npt.NDArray[np.int8]) -> None:
    comm.receive(out, 0)  # expect-error
