import numpy as np
import numpy.typing as npt

from tmpc import TypedCommunicator, spawn_inproc_world

ep = spawn_inproc_world(1)[0]
comm = TypedCommunicator.create(ep, np.float32)
payload: npt.NDArray[np.float64] = np.ones(4, np.float64)
comm.send(payload, 0, 0)  # expect-error
