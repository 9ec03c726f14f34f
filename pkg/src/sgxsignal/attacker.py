"""The untrusted OS as an adversary.

The attacker can:

* decide *when* to inject, guided by a window oracle that stands in for
  single-stepping: the victim exposes labelled instrumentation sites and
  the oracle reports which executions of a site it noticed;
* craft the ``siginfo`` payload that accompanies an injected signal;
* copy sealed files out of untrusted storage and put them back later,
  without ever being able to read or forge them.
"""
from __future__ import annotations

import enum
import hashlib
import hmac
import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .enclave import EnclaveThread
from .policies import InjectionEvent, InjectionSource
from .signals import OriginCode, SigInfo, SignalSpec, as_signal

__all__ = [
    "ConfigurationError",
    "ScheduleError",
    "StrategyKind",
    "WindowPredicate",
    "InjectionStrategy",
    "OracleMode",
    "StepOracle",
    "InjectionLog",
    "Injector",
    "craft_siginfo",
    "SealedBlob",
    "Sealer",
    "UntrustedFileSystem",
    "BlobStore",
    "UnknownToken",
    "IntegrityError",
    "capture_blob",
    "replay_blob",
]


class ConfigurationError(ValueError):
    """Bad attack configuration (unknown window label, missing fields, ...)."""


class ScheduleError(RuntimeError):
    """An injection was attempted at a point the schedule forbids."""


class StrategyKind(enum.Enum):
    ONE_SHOT = "OneShot"
    EVERY_WINDOW = "EveryWindow"
    COUNT_BOUNDED = "CountBounded"


@dataclass(frozen=True)
class WindowPredicate:
    workload_site: str

    def resolve(self, sites: Iterable[str]) -> None:
        sites = set(sites)
        if self.workload_site not in sites:
            raise ConfigurationError(
                f"window {self.workload_site!r} is not an instrumentation point of this workload "
                f"(known: {sorted(sites)})"
            )


def craft_siginfo(signal, code=OriginCode.USER_KILL, sender: str = "attacker") -> SigInfo:
    """Build the payload a siginfo-forging kernel module would send."""
    s = as_signal(signal)
    return SigInfo(s, OriginCode(code), sender)


@dataclass(frozen=True)
class InjectionStrategy:
    kind: StrategyKind
    signal: SignalSpec
    siginfo: Optional[SigInfo] = None
    window: Optional[WindowPredicate] = None
    #: hard cap on injections; required for CountBounded, optional elsewhere
    max_count: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "signal", as_signal(self.signal))
        if not isinstance(self.kind, StrategyKind):
            object.__setattr__(self, "kind", StrategyKind(self.kind))
        if isinstance(self.window, str):
            object.__setattr__(self, "window", WindowPredicate(self.window))
        if self.siginfo is None:
            object.__setattr__(self, "siginfo", craft_siginfo(self.signal))
        elif self.siginfo.signal != self.signal:
            raise ConfigurationError("siginfo describes a different signal")
        if self.kind is StrategyKind.EVERY_WINDOW and self.window is None:
            raise ConfigurationError("EveryWindow needs a window predicate")
        if self.kind is StrategyKind.COUNT_BOUNDED and (self.max_count is None or self.max_count < 1):
            raise ConfigurationError("CountBounded needs max_count >= 1")
        if self.max_count is not None and self.max_count < 0:
            raise ConfigurationError("max_count cannot be negative")

    @property
    def budget(self) -> Optional[int]:
        if self.kind is StrategyKind.ONE_SHOT:
            return 1 if self.max_count is None else min(1, self.max_count)
        return self.max_count

    @classmethod
    def one_shot(cls, signal, window=None, code=OriginCode.USER_KILL) -> "InjectionStrategy":
        s = as_signal(signal)
        return cls(StrategyKind.ONE_SHOT, s, craft_siginfo(s, code), window)

    @classmethod
    def every_window(cls, signal, window, code=OriginCode.USER_KILL, max_count=None) -> "InjectionStrategy":
        s = as_signal(signal)
        return cls(StrategyKind.EVERY_WINDOW, s, craft_siginfo(s, code), window, max_count)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "signal": self.signal.number,
            "origin_code": self.siginfo.origin_code.value,
            "window": None if self.window is None else self.window.workload_site,
            "max_count": self.max_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InjectionStrategy":
        s = as_signal(d["signal"])
        return cls(
            StrategyKind(d.get("kind", "OneShot")),
            s,
            craft_siginfo(s, d.get("origin_code", "user_kill")),
            d.get("window"),
            d.get("max_count"),
        )


class OracleMode(enum.Enum):
    EXACT = "exact"
    TIMER_SAMPLED = "timer_sampled"


@dataclass(frozen=True)
class StepOracle:
    """Detects window entries; ``timer_sampled`` only sees windows that contain a tick.

    Ticks fire at every multiple of ``timer_period`` on the victim's
    simulated instruction clock.
    """

    mode: OracleMode = OracleMode.EXACT
    timer_period: Optional[int] = None

    def __post_init__(self):
        if not isinstance(self.mode, OracleMode):
            object.__setattr__(self, "mode", OracleMode(self.mode))
        if self.mode is OracleMode.TIMER_SAMPLED and (self.timer_period is None or self.timer_period < 1):
            raise ConfigurationError("timer_sampled needs timer_period >= 1")

    def detect(self, starts: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        starts = np.asarray(starts, dtype=np.int64)
        lengths = np.asarray(lengths, dtype=np.int64)
        if self.mode is OracleMode.EXACT:
            return np.ones(starts.shape, dtype=bool)
        p = self.timer_period
        last = starts + lengths - 1
        return (last // p) * p >= starts

    def ticks(self, begin: int, end: int) -> int:
        """Timer interrupts in the half-open span [begin, end)."""
        if self.mode is OracleMode.EXACT or end <= begin:
            return 0
        p = self.timer_period
        return (end - 1) // p - (begin + p - 1) // p + 1

    def to_dict(self) -> dict:
        return {"mode": self.mode.value, "timer_period": self.timer_period}


@dataclass
class InjectionLog:
    strategy: str
    signal: int
    count: int = 0
    missed_windows: int = 0
    aex_count: int = 0
    windows: int = 0
    #: simulated clock at each injection; only the first few are kept
    timestamps: list = field(default_factory=list)

    MAX_TIMESTAMPS = 32

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "signal": self.signal,
            "count": self.count,
            "missed_windows": self.missed_windows,
            "aex_count": self.aex_count,
            "windows": self.windows,
            "timestamps": list(self.timestamps),
        }


class Injector:
    """Stateful attacker worker: decides which window executions get a signal."""

    def __init__(self, strategy: InjectionStrategy, oracle: Optional[StepOracle] = None,
                 sites: Iterable[str] = (), source: InjectionSource = InjectionSource.OS_TKILL_THREAD):
        self.strategy = strategy
        self.oracle = oracle or StepOracle()
        self.source = source
        if strategy.window is not None:
            strategy.window.resolve(sites)
        self.log = InjectionLog(strategy.kind.value, strategy.signal.number)

    @property
    def remaining(self) -> Optional[int]:
        budget = self.strategy.budget
        return None if budget is None else max(0, budget - self.log.count)

    def plan(self, site: str, starts, lengths, span: Optional[tuple[int, int]] = None) -> np.ndarray:
        """Return a mask over the given window executions of ``site``.

        ``span`` is the simulated clock range the windows were drawn from; the
        timer interrupts in it are charged as asynchronous exits.
        """
        starts = np.asarray(starts, dtype=np.int64)
        lengths = np.broadcast_to(np.asarray(lengths, dtype=np.int64), starts.shape)
        if self.strategy.window is None or site != self.strategy.window.workload_site:
            return np.zeros(starts.shape, dtype=bool)
        detected = self.oracle.detect(starts, lengths)
        n_detected = int(detected.sum())
        self.log.windows += int(starts.size)
        self.log.missed_windows += int(starts.size) - n_detected
        if self.oracle.mode is OracleMode.EXACT:
            self.log.aex_count += n_detected
        elif span is not None:
            self.log.aex_count += self.oracle.ticks(*span)
        mask = detected
        left = self.remaining
        if left is not None and n_detected > left:
            mask = detected & (np.cumsum(detected) <= left)
        n = int(mask.sum())
        self._charge(n, starts[mask][: max(0, InjectionLog.MAX_TIMESTAMPS - len(self.log.timestamps))])
        return mask

    def _charge(self, n: int, stamps) -> None:
        self.log.count += n
        self.log.aex_count += n
        self.log.timestamps.extend(int(t) for t in stamps)

    def fire(self, thread: EnclaveThread, target: Optional[str] = None, at: int = 0) -> Optional[InjectionEvent]:
        """One injection attempt outside any window (e.g. a one-shot kill).

        The signal goes out only after the victim was resumed: sending it while
        the thread sits in the untrusted runtime is refused.
        """
        if not thread.in_enclave:
            raise ScheduleError(f"thread {thread.tid} is outside the enclave; injection must follow resume")
        left = self.remaining
        if left is not None and left == 0:
            return None
        self._charge(1, [at] if len(self.log.timestamps) < InjectionLog.MAX_TIMESTAMPS else [])
        return self.event(target or thread.tid)

    def event(self, target: Optional[str] = None) -> InjectionEvent:
        s = self.strategy
        return InjectionEvent(s.signal, s.siginfo, self.source, target)


# ---------------------------------------------------------------------------
# sealed storage
# ---------------------------------------------------------------------------

class IntegrityError(Exception):
    """A sealed blob failed authentication."""


class UnknownToken(KeyError):
    """The attacker tried to replay something it never captured."""


class SealedBlob:
    """Ciphertext plus a visible version tag. No accessor returns plaintext."""

    __slots__ = ("_version", "_nonce", "_body", "_mac")

    def __init__(self, version: str, nonce: bytes, body: bytes, mac: bytes):
        self._version = version
        self._nonce = nonce
        self._body = body
        self._mac = mac

    @property
    def version(self) -> str:
        return self._version

    def __repr__(self) -> str:
        return f"SealedBlob(version={self._version!r}, {len(self._body)} opaque bytes)"

    def __eq__(self, other) -> bool:
        return isinstance(other, SealedBlob) and hmac.compare_digest(self._mac, other._mac)

    def __hash__(self) -> int:
        return hash(self._mac)


def _keystream(key: bytes, nonce: bytes, n: int) -> bytes:
    out = bytearray()
    for counter in itertools.count():
        if len(out) >= n:
            break
        out += hashlib.blake2b(nonce + counter.to_bytes(8, "little"), key=key, digest_size=64).digest()
    return bytes(out[:n])


class Sealer:
    """Enclave-side sealing key. Only code holding it can open or create blobs."""

    def __init__(self, key: bytes):
        if len(key) < 16:
            raise ValueError("sealing key too short")
        self._key = key
        self._counter = 0

    def seal(self, version: str, payload: dict) -> SealedBlob:
        data = json.dumps(payload, sort_keys=True).encode()
        self._counter += 1
        nonce = hashlib.sha256(self._key + self._counter.to_bytes(8, "little")).digest()[:16]
        body = bytes(a ^ b for a, b in zip(data, _keystream(self._key, nonce, len(data))))
        mac = hmac.new(self._key, version.encode() + b"\0" + nonce + body, hashlib.sha256).digest()
        return SealedBlob(version, nonce, body, mac)

    def unseal(self, blob: SealedBlob) -> dict:
        expect = hmac.new(self._key, blob._version.encode() + b"\0" + blob._nonce + blob._body,
                          hashlib.sha256).digest()
        if not hmac.compare_digest(expect, blob._mac):
            raise IntegrityError("sealed blob failed authentication")
        data = bytes(a ^ b for a, b in zip(blob._body, _keystream(self._key, blob._nonce, len(blob._body))))
        return json.loads(data)


class UntrustedFileSystem:
    """Host storage: fully readable and writable by the OS."""

    def __init__(self):
        self._files: dict[str, SealedBlob] = {}

    def write(self, path: str, blob: SealedBlob) -> None:
        self._files[path] = blob

    def read(self, path: str) -> Optional[SealedBlob]:
        return self._files.get(path)

    def remove(self, path: str) -> None:
        self._files.pop(path, None)

    def version(self, path: str) -> Optional[str]:
        blob = self._files.get(path)
        return None if blob is None else blob.version


@dataclass
class BlobStore:
    """What the attacker copied out of untrusted storage."""

    fs: UntrustedFileSystem
    captured: dict = field(default_factory=dict)

    def capture(self, path: str) -> SealedBlob:
        blob = self.fs.read(path)
        if blob is None:
            raise FileNotFoundError(path)
        self.captured[path] = blob
        return blob

    def replay(self, path: str, token: SealedBlob) -> None:
        if not any(token is t for t in self.captured.values()):
            raise UnknownToken("token was never captured")
        self.fs.write(path, token)


def capture_blob(store: BlobStore, path: str) -> SealedBlob:
    return store.capture(path)


def replay_blob(store: BlobStore, path: str, token: SealedBlob) -> None:
    store.replay(path, token)
