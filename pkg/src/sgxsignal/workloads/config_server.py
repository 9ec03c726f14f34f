"""A web server that reloads its configuration on SIGHUP and its binary on SIGUSR1."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..attacker import IntegrityError, Sealer, UntrustedFileSystem

CONFIG_PATH = "/etc/nginx/nginx.conf.sealed"
BINARY_PATH = "/usr/sbin/nginx.sealed"

#: signal number -> handler action
HANDLERS = {1: "reload_config", 10: "reload_binary"}
SITES = ("reload_config", "reload_binary", "serve_request")


@dataclass
class ConfigServer:
    sealer: Sealer
    fs: UntrustedFileSystem
    config_version: Optional[str] = None
    binary_version: Optional[str] = None
    auth: Optional[str] = None
    #: (action, version after the action) for every handler run, aborted ones included
    history: list = field(default_factory=list)

    def publish(self, which: str, version: str, **extra) -> None:
        """Admin-side write of a new sealed config or binary."""
        path = CONFIG_PATH if which == "config" else BINARY_PATH
        payload = {"kind": which, "version": version, **extra}
        self.fs.write(path, self.sealer.seal(version, payload))

    def load(self) -> None:
        self._reload("config")
        self._reload("binary")

    def handle(self, action: str) -> None:
        if action == "reload_config":
            self._reload("config")
        elif action == "reload_binary":
            self._reload("binary")
        else:
            raise ValueError(f"no handler action {action!r}")

    def _reload(self, which: str) -> None:
        path = CONFIG_PATH if which == "config" else BINARY_PATH
        blob = self.fs.read(path)
        if blob is None:
            self.history.append((f"reload_{which}", "aborted:missing"))
            return
        try:
            payload = self.sealer.unseal(blob)
        except IntegrityError:
            self.history.append((f"reload_{which}", "aborted:integrity"))
            return
        if which == "config":
            self.config_version = payload["version"]
            self.auth = payload.get("auth")
        else:
            self.binary_version = payload["version"]
        self.history.append((f"reload_{which}", payload["version"]))

    @property
    def auth_enabled(self) -> bool:
        return self.auth not in (None, "off")
