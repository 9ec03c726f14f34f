"""Signal and hardware-exception vocabulary.

Every other module refers to signals through :class:`SignalSpec` values
obtained from :func:`signal_by_number` or :func:`signal_by_name`. Only the
classic POSIX range 1..31 is modelled.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Union

__all__ = [
    "SignalDomainError",
    "SignalSpec",
    "SIGNALS",
    "HW_EXCEPTION_NUMBERS",
    "signal_by_number",
    "signal_by_name",
    "OriginCode",
    "SigInfo",
    "Vector",
    "VectorSource",
    "HwExceptionVector",
    "hw_vector_to_signal",
    "vector_of",
    "Disposition",
    "default_disposition",
    "OutcomeKind",
    "DeliveryOutcome",
]


class SignalDomainError(ValueError):
    """Raised for signal numbers, names or siginfo payloads outside the model."""


@dataclass(frozen=True)
class SignalSpec:
    number: int
    name: str
    is_hw_exception: bool

    def __str__(self) -> str:
        return f"{self.name}({self.number})"


_NAMES = (
    "SIGHUP", "SIGINT", "SIGQUIT", "SIGILL", "SIGTRAP", "SIGABRT", "SIGBUS",
    "SIGFPE", "SIGKILL", "SIGUSR1", "SIGSEGV", "SIGUSR2", "SIGPIPE", "SIGALRM",
    "SIGTERM", "SIGSTKFLT", "SIGCHLD", "SIGCONT", "SIGSTOP", "SIGTSTP",
    "SIGTTIN", "SIGTTOU", "SIGURG", "SIGXCPU", "SIGXFSZ", "SIGVTALRM",
    "SIGPROF", "SIGWINCH", "SIGIO", "SIGPWR", "SIGSYS",
)
_ALIASES = {"SIGIOT": 6, "SIGUNUSED": 31}

#: Signals the OS raises on behalf of a hardware exception.
HW_EXCEPTION_NUMBERS = frozenset({4, 5, 7, 8, 11, 31})

SIGNALS: tuple[SignalSpec, ...] = tuple(
    SignalSpec(n, name, n in HW_EXCEPTION_NUMBERS) for n, name in enumerate(_NAMES, start=1)
)
_BY_NAME = {s.name: s for s in SIGNALS}
_BY_NAME.update({alias: SIGNALS[n - 1] for alias, n in _ALIASES.items()})


def signal_by_number(n: int) -> SignalSpec:
    """Return the signal numbered ``n``.

    >>> signal_by_number(8)
    SignalSpec(number=8, name='SIGFPE', is_hw_exception=True)
    """
    if isinstance(n, bool) or not isinstance(n, int) or not 1 <= n <= 31:
        raise SignalDomainError(f"signal number must be an integer in 1..31, got {n!r}")
    return SIGNALS[n - 1]


def signal_by_name(name: str) -> SignalSpec:
    """Look a signal up by name; ``SIGIOT``/``SIGUNUSED`` and missing ``SIG`` prefix are accepted."""
    key = name.strip().upper()
    if not key.startswith("SIG"):
        key = "SIG" + key
    try:
        return _BY_NAME[key]
    except KeyError:
        raise SignalDomainError(f"unknown signal name {name!r}") from None


def as_signal(value: Union[int, str, SignalSpec]) -> SignalSpec:
    if isinstance(value, SignalSpec):
        return value
    if isinstance(value, str):
        return signal_by_number(int(value)) if value.strip().isdigit() else signal_by_name(value)
    return signal_by_number(value)


class OriginCode(enum.Enum):
    """The ``si_code`` family carried by a delivered signal."""

    USER_KILL = "user_kill"
    KERNEL_FAULT = "kernel_fault"
    FPE_INTDIV = "fpe_intdiv"
    FPE_FLTOVF = "fpe_fltovf"


_FPE_CODES = (OriginCode.FPE_INTDIV, OriginCode.FPE_FLTOVF)


@dataclass(frozen=True)
class SigInfo:
    signal: SignalSpec
    origin_code: OriginCode = OriginCode.USER_KILL
    sender: str = "os"

    def __post_init__(self):
        if self.origin_code in _FPE_CODES and self.signal.number != 8:
            raise SignalDomainError(
                f"{self.origin_code.value} is only meaningful for SIGFPE, not {self.signal.name}"
            )

    @property
    def claims_arithmetic_fault(self) -> bool:
        return self.origin_code in _FPE_CODES or (
            self.signal.number == 8 and self.origin_code is OriginCode.KERNEL_FAULT
        )


class Vector(enum.Enum):
    DIVIDE_ERROR = "DivideError"
    DEBUG = "Debug"
    BREAKPOINT = "Breakpoint"
    INVALID_OPCODE = "InvalidOpcode"
    BUS_ERROR = "BusError"
    PAGE_FAULT = "PageFault"
    FP_ERROR = "FpError"
    BAD_SYSCALL = "BadSyscall"


class VectorSource(enum.Enum):
    GENUINE_IN_ENCLAVE = "genuine_in_enclave"
    INJECTED = "injected"


@dataclass(frozen=True)
class HwExceptionVector:
    vector: Vector
    source: VectorSource = VectorSource.GENUINE_IN_ENCLAVE


_VECTOR_SIGNAL = {
    Vector.DIVIDE_ERROR: 8,
    Vector.FP_ERROR: 8,
    Vector.INVALID_OPCODE: 4,
    Vector.DEBUG: 5,
    Vector.BREAKPOINT: 5,
    Vector.BUS_ERROR: 7,
    Vector.PAGE_FAULT: 11,
    Vector.BAD_SYSCALL: 31,
}
# canonical vector per hardware-exception signal (the urts conversion direction)
_SIGNAL_VECTOR = {
    8: Vector.DIVIDE_ERROR,
    4: Vector.INVALID_OPCODE,
    5: Vector.DEBUG,
    7: Vector.BUS_ERROR,
    11: Vector.PAGE_FAULT,
    31: Vector.BAD_SYSCALL,
}


def hw_vector_to_signal(v: Union[HwExceptionVector, Vector]) -> SignalSpec:
    """Signal the OS raises for a hardware exception vector."""
    vector = v.vector if isinstance(v, HwExceptionVector) else v
    return SIGNALS[_VECTOR_SIGNAL[vector] - 1]


def vector_of(s: Union[SignalSpec, int]) -> Optional[Vector]:
    """Canonical vector for a hardware-exception signal, ``None`` for the rest."""
    number = s.number if isinstance(s, SignalSpec) else s
    return _SIGNAL_VECTOR.get(number)


class Disposition(enum.Enum):
    TERMINATE = "term"
    CORE = "core"
    IGNORE = "ign"
    STOP = "stop"
    CONTINUE = "cont"

    @property
    def observable(self) -> bool:
        """Whether taking this default action visibly kills the process."""
        return self in (Disposition.TERMINATE, Disposition.CORE)


_CORE = {3, 4, 5, 6, 7, 8, 11, 24, 25, 31}
_IGNORE = {17, 23, 28}
_STOP = {19, 20, 21, 22}


def default_disposition(s: Union[SignalSpec, int]) -> Disposition:
    """Linux default action for a signal with no handler installed."""
    n = s.number if isinstance(s, SignalSpec) else s
    if n in _CORE:
        return Disposition.CORE
    if n in _IGNORE:
        return Disposition.IGNORE
    if n in _STOP:
        return Disposition.STOP
    if n == 18:
        return Disposition.CONTINUE
    return Disposition.TERMINATE


class OutcomeKind(enum.Enum):
    HANDLER_EXECUTED = "HandlerExecuted"
    CRASH = "Crash"
    NO_EFFECT = "NoEffect"
    FILTERED_BY_RUNTIME = "FilteredByRuntime"
    BLOCKED_BY_KERNEL = "BlockedByKernel"

    @property
    def cell(self) -> str:
        """Collapse to the H/C/N alphabet used by the measured tables."""
        if self is OutcomeKind.HANDLER_EXECUTED:
            return "H"
        if self in (OutcomeKind.CRASH, OutcomeKind.BLOCKED_BY_KERNEL):
            return "C"
        return "N"


@dataclass(frozen=True)
class DeliveryOutcome:
    kind: OutcomeKind
    handler_id: Optional[str] = None

    def __post_init__(self):
        if (self.handler_id is not None) != (self.kind is OutcomeKind.HANDLER_EXECUTED):
            raise ValueError("handler_id must be set exactly when a handler executed")

    @classmethod
    def executed(cls, handler_id: str) -> "DeliveryOutcome":
        return cls(OutcomeKind.HANDLER_EXECUTED, handler_id)

    @classmethod
    def crash(cls) -> "DeliveryOutcome":
        return cls(OutcomeKind.CRASH)

    @classmethod
    def no_effect(cls) -> "DeliveryOutcome":
        return cls(OutcomeKind.NO_EFFECT)

    @classmethod
    def filtered(cls) -> "DeliveryOutcome":
        return cls(OutcomeKind.FILTERED_BY_RUNTIME)

    @classmethod
    def blocked(cls) -> "DeliveryOutcome":
        return cls(OutcomeKind.BLOCKED_BY_KERNEL)
