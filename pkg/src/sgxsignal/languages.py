"""Language-runtime signal semantics.

Languages fall into three groups:

* explicit: the application registers per-signal handlers (C, Python, Go, ...)
* implicit: the runtime owns the OS handlers and turns selected signals into
  software exceptions that application code can catch (Java, Julia)
* none: no way to observe signals at all (WebAssembly)

Independently of that, several runtimes install handlers of their own at
startup; :func:`default_handler_effect` reports what those do.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

from .enclave import KERNEL_RESERVED, EnclaveThread, HandlerSource, ReservedByRuntime
from .signals import (
    SIGNALS,
    DeliveryOutcome,
    OutcomeKind,
    SigInfo,
    SignalSpec,
    as_signal,
)

__all__ = [
    "LanguageId",
    "SignalMode",
    "ExceptionName",
    "SoftwareException",
    "InvocationKind",
    "HandlerInvocation",
    "DefaultEffect",
    "LanguageModel",
    "RegistrationUnsupported",
    "get_language",
    "LANGUAGE_ORDER",
    "app_can_register",
    "translate",
    "default_handler_effect",
    "compose",
]


class LanguageId(enum.Enum):
    C = "C"
    CPP = "Cpp"
    JAVA = "Java"
    PYTHON = "Python"
    GO = "Go"
    JS = "JS"
    RUST = "Rust"
    WASM = "Wasm"
    JULIA = "Julia"

    @classmethod
    def parse(cls, value) -> "LanguageId":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("+", "p")
        aliases = {"c++": "cpp", "cpp": "cpp", "javascript": "js", "node": "js", "nodejs": "js",
                   "webassembly": "wasm", "golang": "go"}
        key = aliases.get(str(value).strip().lower(), key)
        for member in cls:
            if member.value.lower() == key:
                return member
        raise ValueError(f"unknown language {value!r}")


LANGUAGE_ORDER = tuple(LanguageId)


class SignalMode(enum.Enum):
    EXPLICIT = "explicit"
    IMPLICIT = "implicit"
    NONE = "none"


class ExceptionName(enum.Enum):
    ARITHMETIC_EXCEPTION = "ArithmeticException"
    DIVIDE_ERROR = "DivideError"


@dataclass(frozen=True)
class SoftwareException:
    name: ExceptionName
    origin_signal: SignalSpec
    siginfo: Optional[SigInfo] = None

    def __post_init__(self):
        if self.origin_signal.number != 8:
            raise ValueError(f"{self.name.value} only originates from SIGFPE")


class InvocationKind(enum.Enum):
    DIRECT_HANDLER = "DirectHandler"
    CATCH_BLOCK = "CatchBlock"
    #: the language runtime's own handler runs and the program observes it
    RUNTIME_HANDLER = "RuntimeHandler"
    #: the runtime swallows the signal
    IGNORED = "Ignored"
    CRASH_DEFAULT = "CrashDefault"

    @property
    def outcome(self) -> OutcomeKind:
        if self in (InvocationKind.DIRECT_HANDLER, InvocationKind.CATCH_BLOCK,
                    InvocationKind.RUNTIME_HANDLER):
            return OutcomeKind.HANDLER_EXECUTED
        if self is InvocationKind.IGNORED:
            return OutcomeKind.NO_EFFECT
        return OutcomeKind.CRASH


@dataclass(frozen=True)
class HandlerInvocation:
    kind: InvocationKind
    signal: SignalSpec
    exception: Optional[SoftwareException] = None

    @property
    def cell(self) -> str:
        return self.kind.outcome.cell

    def __str__(self) -> str:
        if self.exception is not None:
            return f"{self.kind.value}({self.exception.name.value})"
        return f"{self.kind.value}({self.signal.name})"


class DefaultEffect(enum.Enum):
    DEBUG_LOG_TO_STDIO = "DebugLogToStdio"
    START_PROFILING = "StartProfiling"
    START_DEBUG_SERVER = "StartDebugServer"
    CRASH_DEFAULT = "CrashDefault"


class RegistrationUnsupported(Exception):
    """The language offers no API to register a handler for this signal."""


@dataclass(frozen=True)
class LanguageModel:
    id: LanguageId
    mode: SignalMode
    #: signals whose handler the language runtime will not hand to the app
    runtime_reserved: frozenset = frozenset()
    exception_map: dict = field(default_factory=dict)
    #: implicit runtimes that only raise the exception for a genuine fault code
    requires_fault_code: bool = False
    #: handlers the runtime installs at startup, with their effect
    default_handlers: dict = field(default_factory=dict)
    #: measured cells with no documented mechanism
    observed_handled: frozenset = frozenset()
    observed_silent: frozenset = frozenset()

    def __hash__(self):
        return hash(self.id)

    def can_register(self, s) -> bool:
        s = as_signal(s)
        return (self.mode is SignalMode.EXPLICIT and s.number not in KERNEL_RESERVED
                and s.number not in self.runtime_reserved)

    def register(self, thread: EnclaveThread, s, action: str):
        """Install an application handler the way this language would."""
        s = as_signal(s)
        if self.mode is not SignalMode.EXPLICIT:
            raise RegistrationUnsupported(f"{self.id.value} has no signal registration API")
        if s.number in self.runtime_reserved:
            raise ReservedByRuntime(f"the {self.id.value} runtime keeps {s} for itself")
        return thread.register_handler(s, action, HandlerSource.APP_EXPLICIT)

    def translate(self, s, siginfo: Optional[SigInfo] = None) -> HandlerInvocation:
        s = as_signal(s)
        if s.number in KERNEL_RESERVED:
            return HandlerInvocation(InvocationKind.CRASH_DEFAULT, s)
        if self.mode is SignalMode.EXPLICIT:
            if s.number in self.runtime_reserved:
                return HandlerInvocation(InvocationKind.IGNORED, s)
            return HandlerInvocation(InvocationKind.DIRECT_HANDLER, s)
        if self.mode is SignalMode.IMPLICIT:
            name = self.exception_map.get(s.number)
            if name is not None:
                if self.requires_fault_code and siginfo is not None and not siginfo.claims_arithmetic_fault:
                    return HandlerInvocation(InvocationKind.CRASH_DEFAULT, s)
                return HandlerInvocation(InvocationKind.CATCH_BLOCK, s, SoftwareException(name, s, siginfo))
            if s.number in self.observed_handled:
                return HandlerInvocation(InvocationKind.RUNTIME_HANDLER, s)
            if s.number in self.observed_silent:
                return HandlerInvocation(InvocationKind.IGNORED, s)
        return HandlerInvocation(InvocationKind.CRASH_DEFAULT, s)

    def default_handler_effect(self, s) -> Optional[DefaultEffect]:
        return self.default_handlers.get(as_signal(s).number)

    def install_default_handlers(self, thread: EnclaveThread) -> None:
        for n, effect in self.default_handlers.items():
            if n in thread.reserved or n in KERNEL_RESERVED:
                continue
            thread.register_handler(n, f"{self.id.value.lower()}:{effect.value}",
                                    HandlerSource.LANGUAGE_DEFAULT)


def _defaults(numbers, special=None) -> dict:
    out = {n: DefaultEffect.CRASH_DEFAULT for n in numbers}
    out.update(special or {})
    return out


_D = DefaultEffect
_ALL = range(1, 32)
_EXPLICIT = SignalMode.EXPLICIT

_LANGUAGES = {
    LanguageId.C: LanguageModel(LanguageId.C, _EXPLICIT),
    LanguageId.CPP: LanguageModel(LanguageId.CPP, _EXPLICIT),
    LanguageId.PYTHON: LanguageModel(LanguageId.PYTHON, _EXPLICIT, default_handlers=_defaults({2})),
    LanguageId.GO: LanguageModel(
        LanguageId.GO, _EXPLICIT,
        # SIGPROF drives the runtime's CPU profiler
        runtime_reserved=frozenset({27}),
        default_handlers=_defaults(set(_ALL) - {9, 18, 19, 20, 21, 22}, {27: _D.START_PROFILING}),
    ),
    LanguageId.JS: LanguageModel(
        LanguageId.JS, _EXPLICIT,
        default_handlers=_defaults({2, 10, 11, 15, 28}, {10: _D.START_DEBUG_SERVER}),
    ),
    LanguageId.RUST: LanguageModel(LanguageId.RUST, _EXPLICIT, default_handlers=_defaults({7, 11})),
    LanguageId.JAVA: LanguageModel(
        LanguageId.JAVA, SignalMode.IMPLICIT,
        exception_map={8: ExceptionName.ARITHMETIC_EXCEPTION},
        requires_fault_code=True,
        default_handlers=_defaults({1, 2, 3, 4, 7, 8, 11, 12, 13, 15, 25}, {3: _D.DEBUG_LOG_TO_STDIO}),
    ),
    LanguageId.JULIA: LanguageModel(
        LanguageId.JULIA, SignalMode.IMPLICIT,
        exception_map={8: ExceptionName.DIVIDE_ERROR},
        default_handlers=_defaults({2, 4, 6, 7, 8, 10, 11, 12, 31}, {10: _D.DEBUG_LOG_TO_STDIO}),
        observed_handled=frozenset({2, 10, 20, 21, 22, 23}),
        observed_silent=frozenset({5, 12, 13, 17, 18, 28}),
    ),
    LanguageId.WASM: LanguageModel(LanguageId.WASM, SignalMode.NONE, default_handlers=_defaults({4, 7, 8, 11})),
}


def get_language(lang) -> LanguageModel:
    if isinstance(lang, LanguageModel):
        return lang
    return _LANGUAGES[LanguageId.parse(lang)]


def app_can_register(lang, s) -> bool:
    return get_language(lang).can_register(s)


def translate(lang, s, siginfo: Optional[SigInfo] = None) -> HandlerInvocation:
    return get_language(lang).translate(s, siginfo)


def default_handler_effect(lang, s) -> Optional[DefaultEffect]:
    return get_language(lang).default_handler_effect(s)


def compose(runtime: DeliveryOutcome, lang, s, siginfo: Optional[SigInfo] = None) -> OutcomeKind:
    """Runtime filters first; only a signal the runtime hands to the app reaches the language."""
    if runtime.kind is not OutcomeKind.HANDLER_EXECUTED:
        return runtime.kind
    return get_language(lang).translate(s, siginfo).kind.outcome


def all_signals() -> tuple[SignalSpec, ...]:
    return SIGNALS
