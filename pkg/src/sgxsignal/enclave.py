"""Simulated enclave threads and processes.

A thread carries its handler table and the State Save Area exit record.
Only a genuine in-enclave hardware exception leaves ``valid == 1`` behind;
every OS-driven asynchronous exit records ``valid == 0``. Threads built with
``exit_info_hw=False`` model SGX1 parts, which store no exit record at all.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

from .signals import SignalSpec, Vector, HwExceptionVector, as_signal

__all__ = [
    "BlockedByKernel",
    "ReservedByRuntime",
    "EnclaveStateError",
    "HandlerSource",
    "HandlerSpec",
    "ExitType",
    "ExitInfo",
    "ThreadMode",
    "EnclaveThread",
    "EnclaveProcess",
    "KERNEL_RESERVED",
]

#: SIGKILL and SIGSTOP: rt_sigaction always refuses these.
KERNEL_RESERVED = frozenset({9, 19})


class BlockedByKernel(Exception):
    """The kernel refused a handler registration (SIGKILL / SIGSTOP)."""


class ReservedByRuntime(Exception):
    """The runtime keeps this signal for itself and refuses app handlers."""


class EnclaveStateError(RuntimeError):
    """Illegal lifecycle transition on an enclave thread."""


class HandlerSource(enum.Enum):
    APP_EXPLICIT = "app_explicit"
    LANGUAGE_DEFAULT = "language_default"
    RUNTIME_INTERNAL = "runtime_internal"


@dataclass(frozen=True)
class HandlerSpec:
    signal: SignalSpec
    action: str
    registered_via: HandlerSource = HandlerSource.APP_EXPLICIT

    def __post_init__(self):
        if self.signal.number in KERNEL_RESERVED:
            raise BlockedByKernel(f"cannot install a handler for {self.signal}")


class ExitType(enum.Enum):
    HW = "hw"
    SW = "sw"


@dataclass(frozen=True)
class ExitInfo:
    vector: Optional[Vector]
    exit_type: ExitType
    valid: int

    def __post_init__(self):
        if self.valid not in (0, 1):
            raise ValueError("valid is a single bit")
        if self.valid and self.vector is None:
            raise ValueError("a valid exit record always names its vector")


class ThreadMode(enum.Enum):
    IN_ENCLAVE = "InEnclave"
    EXITED_ASYNC = "ExitedAsync"
    EXITED_OCALL = "ExitedOcall"


@dataclass
class EnclaveThread:
    tid: str
    handlers: dict[int, HandlerSpec] = field(default_factory=dict)
    mode: ThreadMode = ThreadMode.IN_ENCLAVE
    ssa: Optional[ExitInfo] = None
    exit_info_hw: bool = True
    reserved: frozenset = frozenset()
    #: Open Enclave: host signals this thread opted into
    host_signals: set = field(default_factory=set)

    def register_handler(self, s, action: str,
                         via: HandlerSource = HandlerSource.APP_EXPLICIT) -> HandlerSpec:
        s = as_signal(s)
        if s.number in self.reserved:
            raise ReservedByRuntime(f"{s} is reserved by the runtime")
        spec = HandlerSpec(s, action, via)  # raises BlockedByKernel for 9/19
        self.handlers[s.number] = spec
        return spec

    def handler_for(self, s) -> Optional[HandlerSpec]:
        return self.handlers.get(as_signal(s).number)

    def _leave(self, mode: ThreadMode, record: Optional[ExitInfo]) -> Optional[ExitInfo]:
        if self.mode is not ThreadMode.IN_ENCLAVE:
            raise EnclaveStateError(f"thread {self.tid} already outside the enclave ({self.mode.value})")
        self.mode = mode
        self.ssa = record if self.exit_info_hw else None
        return self.ssa

    def raise_genuine_hw_exception(self, v) -> Optional[ExitInfo]:
        """An in-enclave instruction faulted: AEX with a valid exit record."""
        vector = v.vector if isinstance(v, HwExceptionVector) else v
        return self._leave(ThreadMode.EXITED_ASYNC, ExitInfo(vector, ExitType.HW, 1))

    def async_exit_injected(self) -> Optional[ExitInfo]:
        """The OS forced an AEX (interrupt or injected signal)."""
        return self._leave(ThreadMode.EXITED_ASYNC, ExitInfo(None, ExitType.HW, 0))

    def page_fault_resolved_by_os(self) -> Optional[ExitInfo]:
        """Demand paging: AEX, the OS maps the page and resumes. No signal is raised.

        Returns the exit record the fault left behind before the resume cleared it.
        """
        record = self._leave(ThreadMode.EXITED_ASYNC, ExitInfo(Vector.PAGE_FAULT, ExitType.HW, 1))
        self.resume()
        return record

    def exit_for_ocall(self) -> None:
        self._leave(ThreadMode.EXITED_OCALL, None)

    def resume(self) -> None:
        if self.mode is ThreadMode.IN_ENCLAVE:
            raise EnclaveStateError(f"thread {self.tid} is already executing in the enclave")
        self.mode = ThreadMode.IN_ENCLAVE
        self.ssa = None

    @property
    def in_enclave(self) -> bool:
        return self.mode is ThreadMode.IN_ENCLAVE


@dataclass
class EnclaveProcess:
    pid: str
    threads: list[EnclaveThread]
    co_resident: bool = False
    crashed: bool = False

    def __post_init__(self):
        if not self.threads:
            raise ValueError("an enclave process has at least one thread")

    @classmethod
    def single(cls, pid: str = "p0", tids=("t0",), **thread_kw) -> "EnclaveProcess":
        return cls(pid, [EnclaveThread(tid, **thread_kw) for tid in tids])

    def thread(self, tid: Optional[str] = None) -> EnclaveThread:
        if tid is None or tid == self.pid:
            return self.threads[0]
        for t in self.threads:
            if t.tid == tid:
                return t
        raise KeyError(f"no thread {tid!r} in process {self.pid}")

    @property
    def main(self) -> EnclaveThread:
        return self.threads[0]
