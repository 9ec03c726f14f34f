"""Signal delivery pipelines for SGX SDKs and library OSes.

Each policy turns an :class:`InjectionEvent` aimed at an enclave process into
a :class:`DeliveryTrace`: the ordered pipeline steps it went through and the
terminal outcome. Pipelines mutate the target thread's lifecycle (the AEX a
signal causes, the resume afterwards) but are otherwise pure.

Step names carry a ``:result`` suffix where a check can go either way,
e.g. ``exit_info_check:reject``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, TYPE_CHECKING

from .enclave import (
    KERNEL_RESERVED,
    EnclaveProcess,
    EnclaveThread,
    HandlerSource,
    BlockedByKernel,
    ThreadMode,
)
from .signals import (
    DeliveryOutcome,
    OriginCode,
    OutcomeKind,
    SigInfo,
    SignalSpec,
    as_signal,
    default_disposition,
    vector_of,
)

if TYPE_CHECKING:
    from .defenses import Defenses

__all__ = [
    "PolicyId",
    "InjectionSource",
    "InjectionEvent",
    "DeliveryTrace",
    "RuntimePolicy",
    "get_policy",
    "deliver",
    "exit_info_check",
    "oe_register_host_signal",
    "teaclave_signal_ecall",
    "asylo_deliver_ecall",
    "gramine_deliver",
    "VULNERABLE_POLICIES",
    "ENCLAVE_INTERNAL_STEPS",
]


class PolicyId(enum.Enum):
    INTEL_SDK_V1 = "IntelSdkV1"
    INTEL_SDK_V2 = "IntelSdkV2"
    OPEN_ENCLAVE = "OpenEnclave"
    TEACLAVE = "Teaclave"
    ASYLO = "Asylo"
    GRAMINE = "Gramine"
    SCONE = "Scone"
    ENCLAVE_OS = "EnclaveOS"
    OCCLUM = "Occlum"
    MYSTIKOS = "Mystikos"
    NO_SIGNAL_SUPPORT = "NoSignalSupport"

    @classmethod
    def parse(cls, value) -> "PolicyId":
        if isinstance(value, cls):
            return value
        key = str(value).replace("-", "").replace("_", "").lower()
        for member in cls:
            if member.value.lower() == key or member.name.replace("_", "").lower() == key:
                return member
        raise ValueError(f"unknown runtime policy {value!r}")


#: Row order of the measured runtime matrix.
VULNERABLE_POLICIES = (
    PolicyId.OPEN_ENCLAVE,
    PolicyId.TEACLAVE,
    PolicyId.ASYLO,
    PolicyId.GRAMINE,
    PolicyId.SCONE,
    PolicyId.ENCLAVE_OS,
    PolicyId.OCCLUM,
)


class InjectionSource(enum.Enum):
    OS_KILL = "os_kill"
    OS_TKILL_THREAD = "os_tkill_thread"
    UNTRUSTED_RUNTIME_ECALL = "untrusted_runtime_ecall"
    ENCLAVE_THREAD_OCALL = "enclave_thread_ocall"
    CORESIDENT_ENCLAVE_PROCESS = "coresident_enclave_process"
    GENUINE_HW_EXCEPTION = "genuine_hw_exception"

    @property
    def from_os(self) -> bool:
        return self in (InjectionSource.OS_KILL, InjectionSource.OS_TKILL_THREAD,
                        InjectionSource.UNTRUSTED_RUNTIME_ECALL)


@dataclass(frozen=True)
class InjectionEvent:
    signal: SignalSpec
    siginfo: SigInfo
    source: InjectionSource
    target: Optional[str] = None

    def __post_init__(self):
        if self.siginfo.signal != self.signal:
            raise ValueError("siginfo describes a different signal")
        if self.source is InjectionSource.GENUINE_HW_EXCEPTION and not self.signal.is_hw_exception:
            raise ValueError(f"{self.signal} cannot originate from a hardware exception")

    @classmethod
    def make(cls, signal, source=InjectionSource.OS_KILL, target=None,
             origin: Optional[OriginCode] = None, sender: str = "os") -> "InjectionEvent":
        s = as_signal(signal)
        source = InjectionSource(source) if not isinstance(source, InjectionSource) else source
        if origin is None:
            origin = (OriginCode.KERNEL_FAULT if source is InjectionSource.GENUINE_HW_EXCEPTION
                      else OriginCode.USER_KILL)
        return cls(s, SigInfo(s, origin, sender), source, target)


_FILTER_MARKERS = ("exit_info_check:reject", "exit_info_filter:reject", "registration_check:fail",
                   "whitelist_check:fail", "ledger_check:fail")

#: Steps that execute inside the enclave boundary.
ENCLAVE_INTERNAL_STEPS = frozenset({
    "libos_kill", "libos_signal_route", "whitelist_check:pass", "whitelist_check:fail",
    "exit_info_filter:pass", "exit_info_filter:reject", "ledger_check:pass", "ledger_check:fail",
    "ledger_check:skipped", "handler_lookup", "app_handler", "default_action", "libos_terminate",
})


@dataclass(frozen=True)
class DeliveryTrace:
    steps: tuple[str, ...]
    outcome: DeliveryOutcome

    def __post_init__(self):
        if self.outcome.kind is OutcomeKind.FILTERED_BY_RUNTIME:
            if not any(m in step for step in self.steps for m in _FILTER_MARKERS):
                raise ValueError("a filtered delivery must record the check that failed")

    @property
    def kind(self) -> OutcomeKind:
        return self.outcome.kind

    @property
    def cell(self) -> str:
        return self.outcome.kind.cell


class _Pipeline:
    """Step recorder for one delivery."""

    def __init__(self):
        self.steps: list[str] = []

    def step(self, name: str) -> None:
        self.steps.append(name)

    def finish(self, outcome: DeliveryOutcome) -> DeliveryTrace:
        return DeliveryTrace(tuple(self.steps), outcome)


@dataclass(frozen=True)
class RuntimePolicy:
    """Base class. ``hw_exception_interface``/``other_signal_interface`` are
    ``None`` for closed-source runtimes whose interfaces could not be inspected."""

    id: PolicyId
    hw_exception_interface: Optional[bool]
    other_signal_interface: Optional[bool]
    #: signals the runtime's hardware-exception path knows how to deliver
    hw_exception_signals: frozenset = frozenset()
    #: SGX2 parts record exit information; SGX1 parts do not
    exit_info_hw: bool = True
    #: signals the runtime keeps for itself
    reserved_signals: frozenset = frozenset()

    # -- enclave construction -------------------------------------------------
    def new_process(self, pid: str = "p0", tids=("t0",), co_resident: bool = False) -> EnclaveProcess:
        proc = EnclaveProcess.single(pid, tids, exit_info_hw=self.exit_info_hw,
                                     reserved=self.reserved_signals)
        proc.co_resident = co_resident
        return proc

    def install_app_handler(self, thread: EnclaveThread, s, action: str,
                            via: HandlerSource = HandlerSource.APP_EXPLICIT):
        """Register ``action`` the way an application on this runtime would."""
        return thread.register_handler(s, action, via)

    # -- delivery -------------------------------------------------------------
    def deliver(self, event: InjectionEvent, proc: EnclaveProcess,
                defense: Optional["Defenses"] = None) -> DeliveryTrace:
        return self._run(event, proc, defense, self._pipeline)

    def _enter(self, event, thread, p) -> Optional[DeliveryTrace]:
        """Model the asynchronous exit caused by the event. May short-circuit."""
        src = event.source
        if src is InjectionSource.GENUINE_HW_EXCEPTION:
            thread.raise_genuine_hw_exception(vector_of(event.signal))
            p.step("aex_hw_exception")
            return None
        if src in (InjectionSource.CORESIDENT_ENCLAVE_PROCESS, InjectionSource.UNTRUSTED_RUNTIME_ECALL):
            return None
        if thread.mode is ThreadMode.IN_ENCLAVE:
            thread.async_exit_injected()
            p.step("aex_injected")
        else:
            p.step("arrived_outside_enclave")
        return None

    def _pipeline(self, event, proc, thread, p, defense) -> DeliveryTrace:
        raise NotImplementedError

    def _settle(self, trace, proc, thread, defense) -> None:
        if trace.kind is OutcomeKind.CRASH:
            proc.crashed = True
            return
        if thread.mode is ThreadMode.EXITED_ASYNC:
            thread.resume()

    def _run(self, event, proc, defense, body) -> DeliveryTrace:
        thread = proc.thread(event.target)
        p = _Pipeline()
        if proc.crashed:
            p.step("target_dead")
            return p.finish(DeliveryOutcome.no_effect())
        trace = self._enter(event, thread, p)
        if trace is None:
            trace = body(event, proc, thread, p, defense)
        self._settle(trace, proc, thread, defense)
        return trace

    # -- shared pipeline fragments -----------------------------------------------
    def _os_signal(self, event, p) -> Optional[DeliveryTrace]:
        p.step("os_signal")
        if event.signal.number in KERNEL_RESERVED:
            # rt_sigaction failed for these at registration time; the kernel
            # applies its own action and the app never sees the signal
            p.step("kernel_default_action")
            return p.finish(DeliveryOutcome.crash())
        return None

    def _screen(self, event, proc, thread, p, defense) -> Optional[DeliveryTrace]:
        if defense is None:
            return None
        return defense.screen(event, proc, thread, p)

    def _invoke(self, signal: SignalSpec, thread: EnclaveThread, p: _Pipeline) -> DeliveryTrace:
        p.step("handler_lookup")
        h = thread.handler_for(signal)
        if h is not None:
            p.step("app_handler")
            return p.finish(DeliveryOutcome.executed(h.action))
        return self._default(signal, p, "default_action")

    @staticmethod
    def _default(signal: SignalSpec, p: _Pipeline, step: str) -> DeliveryTrace:
        p.step(step)
        if default_disposition(signal).observable:
            return p.finish(DeliveryOutcome.crash())
        return p.finish(DeliveryOutcome.no_effect())

    def exit_info_check(self, thread: EnclaveThread, p: Optional[_Pipeline] = None) -> bool:
        """Trusted-runtime guard on the SSA exit record (accept iff valid == 1).

        A thread without exit-information hardware skips the guard entirely,
        which accepts everything.
        """
        if not thread.exit_info_hw:
            if p is not None:
                p.step("exit_info_check:skipped")
            return True
        ok = thread.ssa is not None and thread.ssa.valid == 1
        if p is not None:
            p.step("exit_info_check:accept" if ok else "exit_info_check:reject")
        return ok

    def _sdk_exception_path(self, event, proc, thread, p, defense, on_reject) -> DeliveryTrace:
        """urts converts the signal back to a vector and re-enters the trts."""
        p.step("untrusted_handler")
        if thread.mode is ThreadMode.EXITED_OCALL:
            # not an enclave fault; the urts has nothing to forward
            return self._default(event.signal, p, "urts_default_action")
        p.step("ecall_enter")
        screened = self._screen(event, proc, thread, p, defense)
        if screened is not None:
            return screened
        if not self.exit_info_check(thread, p):
            if on_reject == "filter":
                p.step("discard_exception")
                return p.finish(DeliveryOutcome.filtered())
            return self._default(event.signal, p, "host_default_action")
        return self._invoke(event.signal, thread, p)


# ---------------------------------------------------------------------------
# SDKs
# ---------------------------------------------------------------------------

_ALL_HW = frozenset({4, 5, 7, 8, 11, 31})


@dataclass(frozen=True)
class IntelSdkPolicy(RuntimePolicy):
    """Hardware-exception interface only; no route for other signals."""

    def _pipeline(self, event, proc, thread, p, defense):
        if event.source is not InjectionSource.GENUINE_HW_EXCEPTION:
            early = self._os_signal(event, p)
            if early:
                return early
        if event.signal.number not in self.hw_exception_signals:
            p.step("registration_check:fail")
            return p.finish(DeliveryOutcome.filtered())
        return self._sdk_exception_path(event, proc, thread, p, defense, on_reject="filter")


@dataclass(frozen=True)
class OpenEnclavePolicy(RuntimePolicy):
    # host signals the OE host runtime actually forwards into the enclave (measured)
    forwarded_host_signals: frozenset = frozenset({1, 6, 10, 12, 13, 14})
    # unforwarded signals that nevertheless had no visible effect (measured, unexplained)
    silent_host_signals: frozenset = frozenset({29})

    def install_app_handler(self, thread, s, action, via=HandlerSource.APP_EXPLICIT):
        spec = thread.register_handler(s, action, via)
        oe_register_host_signal(thread, s)
        return spec

    def _pipeline(self, event, proc, thread, p, defense):
        s = event.signal
        if event.source is not InjectionSource.GENUINE_HW_EXCEPTION:
            early = self._os_signal(event, p)
            if early:
                return early
        if s.number in self.hw_exception_signals:
            return self._sdk_exception_path(event, proc, thread, p, defense, on_reject="host_default")
        p.step("host_signal_handler")
        if s.number not in thread.host_signals:
            p.step("registration_check:fail")
            return self._default(s, p, "host_default_action")
        p.step("registration_check:pass")
        if s.number not in self.forwarded_host_signals:
            if s.number in self.silent_host_signals:
                p.step("host_ignores_signal")
                return p.finish(DeliveryOutcome.no_effect())
            return self._default(s, p, "host_default_action")
        p.step("ecall_enter")
        screened = self._screen(event, proc, thread, p, defense)
        if screened is not None:
            return screened
        return self._invoke(s, thread, p)


@dataclass(frozen=True)
class TeaclavePolicy(RuntimePolicy):
    def _pipeline(self, event, proc, thread, p, defense):
        s = event.signal
        if event.source is InjectionSource.UNTRUSTED_RUNTIME_ECALL:
            return self._signal_ecall(event, proc, thread, p, defense)
        if event.source is not InjectionSource.GENUINE_HW_EXCEPTION:
            early = self._os_signal(event, p)
            if early:
                return early
        if s.number in self.hw_exception_signals:
            return self._sdk_exception_path(event, proc, thread, p, defense, on_reject="host_default")
        p.step("untrusted_handler")
        return self._signal_ecall(event, proc, thread, p, defense)

    def _signal_ecall(self, event, proc, thread, p, defense):
        s = event.signal
        p.step("t_signal_handler_ecall")
        if s.number in self.hw_exception_signals:
            # hardware-exception signals are only accepted on the exception path
            p.step("hw_signal_rejected")
            return p.finish(DeliveryOutcome.crash())
        screened = self._screen(event, proc, thread, p, defense)
        if screened is not None:
            return screened
        return self._invoke(s, thread, p)


@dataclass(frozen=True)
class AsyloPolicy(RuntimePolicy):
    # signals Asylo's untrusted signal manager swallows (measured, unexplained)
    unforwarded_signals: frozenset = frozenset({4, 7, 17, 29})

    def _pipeline(self, event, proc, thread, p, defense):
        s = event.signal
        if event.source is InjectionSource.GENUINE_HW_EXCEPTION:
            return self._sdk_exception_path(event, proc, thread, p, defense, on_reject="filter")
        if event.source is InjectionSource.UNTRUSTED_RUNTIME_ECALL:
            return self._deliver_ecall(event, proc, thread, p, defense)
        early = self._os_signal(event, p)
        if early:
            return early
        p.step("untrusted_handler")
        if s.number in self.unforwarded_signals:
            p.step("urts_ignores_signal")
            return p.finish(DeliveryOutcome.no_effect())
        if thread.handler_for(s) is None:
            # no ocall_enc_untrusted_register_signal_handler was made for s
            return self._default(s, p, "urts_default_action")
        return self._deliver_ecall(event, proc, thread, p, defense)

    def _deliver_ecall(self, event, proc, thread, p, defense):
        p.step("ecall_deliver_signal")
        screened = self._screen(event, proc, thread, p, defense)
        if screened is not None:
            return screened
        return self._invoke(event.signal, thread, p)


# ---------------------------------------------------------------------------
# library OSes
# ---------------------------------------------------------------------------

_PAL_EVENTS = {4: "illegal_instruction", 7: "memfault", 8: "arithmetic_error", 11: "memfault"}


@dataclass(frozen=True)
class GraminePolicy(RuntimePolicy):
    # uPAL installs its own handlers for these and never forwards them
    upal_consumed: frozenset = frozenset({12, 13, 15})
    #: models the attacker's uPAL patch: signals arriving while the uPAL runs are dropped
    upal_ignores_outside: bool = False

    def _enter(self, event, thread, p):
        if (event.source is not InjectionSource.GENUINE_HW_EXCEPTION
                and thread.mode is not ThreadMode.IN_ENCLAVE):
            p.step("os_signal")
            p.step("upal_handle_sync_signal")
            if self.upal_ignores_outside:
                p.step("upal_ignored_outside_enclave")
                return p.finish(DeliveryOutcome.no_effect())
            p.step("upal_illegal_state")
            return p.finish(DeliveryOutcome.crash())
        return super()._enter(event, thread, p)

    def _pipeline(self, event, proc, thread, p, defense):
        s = event.signal
        if event.source is not InjectionSource.GENUINE_HW_EXCEPTION:
            early = self._os_signal(event, p)
            if early:
                return early
        p.step("upal_handle_sync_signal")
        event_name = _PAL_EVENTS.get(s.number)
        if event_name is None:
            if s.number in self.upal_consumed:
                p.step("upal_consumed")
                return p.finish(DeliveryOutcome.no_effect())
            return self._default(s, p, "upal_default_action")
        p.step("pal_event_map")
        p.step(f"pal_event_{event_name}")
        p.step("sgx_raise_ecall")
        screened = self._screen(event, proc, thread, p, defense)
        if screened is not None:
            return screened
        p.step("libos_siginfo")
        return self._invoke(s, thread, p)


@dataclass(frozen=True)
class PassThroughPolicy(RuntimePolicy):
    """Closed-source library OSes: every OS signal is handed to the enclave."""

    def _pipeline(self, event, proc, thread, p, defense):
        s = event.signal
        if event.source is InjectionSource.GENUINE_HW_EXCEPTION:
            p.step("libos_exception_entry")
        else:
            early = self._os_signal(event, p)
            if early:
                return early
            p.step("libos_signal_ecall")
            if s.number in self.reserved_signals:
                p.step("libos_reserved_signal")
                return p.finish(DeliveryOutcome.crash())
        screened = self._screen(event, proc, thread, p, defense)
        if screened is not None:
            return screened
        return self._invoke(s, thread, p)


@dataclass(frozen=True)
class MultiProcessPolicy(RuntimePolicy):
    """Library OSes that host several processes inside one enclave."""

    os_signals_crash: bool = True

    def _pipeline(self, event, proc, thread, p, defense):
        s = event.signal
        if event.source is InjectionSource.CORESIDENT_ENCLAVE_PROCESS:
            trace = self._intra_enclave(event, proc, thread, p, defense)
            outside = [st for st in trace.steps if st not in ENCLAVE_INTERNAL_STEPS]
            assert not outside, f"intra-enclave routing left the enclave: {outside}"
            return trace
        if event.source is InjectionSource.GENUINE_HW_EXCEPTION:
            if not self.hw_exception_interface:
                return self._default(s, p, "no_exception_interface")
            p.step("libos_exception_entry")
            screened = self._screen(event, proc, thread, p, defense)
            if screened is not None:
                return screened
            return self._invoke(s, thread, p)
        p.step("os_signal")
        if self.os_signals_crash:
            # host kernel's default handling for the enclave host process
            p.step("host_kernel_default")
            return p.finish(DeliveryOutcome.crash())
        p.step("host_drops_signal")
        return p.finish(DeliveryOutcome.no_effect())

    def _intra_enclave(self, event, proc, thread, p, defense):
        s = event.signal
        p.step("libos_kill")
        if s.number in KERNEL_RESERVED:
            p.step("libos_terminate")
            return p.finish(DeliveryOutcome.crash())
        p.step("libos_signal_route")
        screened = self._screen(event, proc, thread, p, defense)
        if screened is not None:
            return screened
        return self._invoke(s, thread, p)


@dataclass(frozen=True)
class NoSignalPolicy(RuntimePolicy):
    def deliver(self, event, proc, defense=None):
        return DeliveryTrace((), DeliveryOutcome.no_effect())


_POLICIES = {
    PolicyId.INTEL_SDK_V1: IntelSdkPolicy(PolicyId.INTEL_SDK_V1, True, False, _ALL_HW, exit_info_hw=False),
    PolicyId.INTEL_SDK_V2: IntelSdkPolicy(PolicyId.INTEL_SDK_V2, True, False, _ALL_HW),
    PolicyId.OPEN_ENCLAVE: OpenEnclavePolicy(PolicyId.OPEN_ENCLAVE, True, True, frozenset({4, 7, 8, 11})),
    PolicyId.TEACLAVE: TeaclavePolicy(PolicyId.TEACLAVE, True, True, frozenset({4, 5, 7, 8, 11})),
    PolicyId.ASYLO: AsyloPolicy(PolicyId.ASYLO, True, True, _ALL_HW),
    PolicyId.GRAMINE: GraminePolicy(PolicyId.GRAMINE, True, True, frozenset(_PAL_EVENTS)),
    PolicyId.SCONE: PassThroughPolicy(PolicyId.SCONE, None, None, _ALL_HW),
    PolicyId.ENCLAVE_OS: PassThroughPolicy(PolicyId.ENCLAVE_OS, None, None, _ALL_HW,
                                           reserved_signals=frozenset({12})),
    PolicyId.OCCLUM: MultiProcessPolicy(PolicyId.OCCLUM, True, True, _ALL_HW),
    PolicyId.MYSTIKOS: MultiProcessPolicy(PolicyId.MYSTIKOS, False, True, os_signals_crash=False),
    PolicyId.NO_SIGNAL_SUPPORT: NoSignalPolicy(PolicyId.NO_SIGNAL_SUPPORT, False, False),
}


def get_policy(pid, **overrides) -> RuntimePolicy:
    """Return the policy for ``pid``; keyword overrides build a variant
    (e.g. ``get_policy("Gramine", upal_ignores_outside=True)``)."""
    if isinstance(pid, RuntimePolicy) and not overrides:
        return pid
    base = pid if isinstance(pid, RuntimePolicy) else _POLICIES[PolicyId.parse(pid)]
    if overrides:
        from dataclasses import replace
        return replace(base, **overrides)
    return base


def deliver(policy, event: InjectionEvent, proc: EnclaveProcess,
            defense: Optional["Defenses"] = None) -> DeliveryTrace:
    if not isinstance(policy, RuntimePolicy):
        policy = get_policy(policy)
    return policy.deliver(event, proc, defense)


def exit_info_check(policy, thread: EnclaveThread) -> bool:
    if not isinstance(policy, RuntimePolicy):
        policy = get_policy(policy)
    return policy.exit_info_check(thread)


def oe_register_host_signal(thread: EnclaveThread, s) -> None:
    """Open Enclave: let ``thread`` receive host signal ``s``."""
    s = as_signal(s)
    if s.number in KERNEL_RESERVED:
        raise BlockedByKernel(f"cannot enable host delivery of {s}")
    thread.host_signals.add(s.number)


def teaclave_signal_ecall(event: InjectionEvent, proc: EnclaveProcess,
                          defense: Optional["Defenses"] = None) -> DeliveryTrace:
    """Deliver through Teaclave's public ``t_signal_handler_ecall`` only."""
    policy = get_policy(PolicyId.TEACLAVE)

    def body(event, proc, thread, p, defense):
        if event.source.from_os and event.source is not InjectionSource.UNTRUSTED_RUNTIME_ECALL:
            early = policy._os_signal(event, p)
            if early:
                return early
            p.step("untrusted_handler")
        return policy._signal_ecall(event, proc, thread, p, defense)

    return policy._run(event, proc, defense, body)


def asylo_deliver_ecall(event: InjectionEvent, proc: EnclaveProcess,
                        defense: Optional["Defenses"] = None) -> DeliveryTrace:
    """Deliver a signal to an Asylo enclave via ``ecall_deliver_signal``."""
    return get_policy(PolicyId.ASYLO).deliver(event, proc, defense)


def gramine_deliver(event: InjectionEvent, proc: EnclaveProcess,
                    defense: Optional["Defenses"] = None) -> DeliveryTrace:
    return get_policy(PolicyId.GRAMINE).deliver(event, proc, defense)
