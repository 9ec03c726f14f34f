"""A JavaScript service whose runtime opens a debugger on SIGUSR1."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

SITES = ("request_loop",)


class Port(enum.Enum):
    CLOSED = "closed"
    OPEN = "open"


@dataclass
class DebugServer:
    secret: bytes
    debug_port: Port = Port.CLOSED
    leaked: bool = False

    def handle(self, action: str) -> None:
        # the runtime's default SIGUSR1 handler
        if action.endswith("StartDebugServer"):
            self.debug_socket_handler()

    def debug_socket_handler(self) -> None:
        self.debug_port = Port.OPEN

    def attacker_connect(self) -> Optional[bytes]:
        if self.debug_port is not Port.OPEN:
            return None
        self.leaked = True
        return self.secret

    def serve_request(self) -> str:
        return "200 OK"


def attacker_connect(state: DebugServer) -> Optional[bytes]:
    return state.attacker_connect()
