from .base import Endpoint, Mailbox
from .inproc import InprocEndpoint, InprocWorld, spawn_inproc_world
from .tcp import TcpEndpoint, connect_tcp_world

__all__ = [
    "Endpoint", "Mailbox", "InprocEndpoint", "InprocWorld", "spawn_inproc_world",
    "TcpEndpoint", "connect_tcp_world",
]
