import numpy as np

from tmpc import TypedCommunicator, spawn_inproc_world

ep = spawn_inproc_world(1)[0]
comm = TypedCommunicator.create(ep, np.float32)
value = np.float32(0)
comm.receive(value, 0, 0)  # expect-error
