"""Mitigations that plug into the trusted side of every delivery pipeline.

Three checks run in a fixed order once an event reaches trusted code:

1. signal whitelist configured at enclave creation,
2. exit-information filter for events claiming a hardware-exception origin,
3. inter-thread ledger: a signal is accepted only if an enclave thread of the
   same process announced it before leaving through an ocall.

Genuine hardware exceptions carry a valid SSA exit record and bypass the
ledger, which only guards the signal path.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .enclave import EnclaveProcess, EnclaveThread, EnclaveStateError
from .signals import DeliveryOutcome, SignalSpec, as_signal

__all__ = [
    "DefenseConfig",
    "LedgerEntry",
    "SignalLedger",
    "Defenses",
    "apply_whitelist",
    "apply_exit_info_filter",
]


@dataclass(frozen=True)
class DefenseConfig:
    exit_info_filter: bool = False
    inter_thread_ledger: bool = False
    signal_whitelist: Optional[frozenset] = None

    def __post_init__(self):
        if self.signal_whitelist is not None:
            object.__setattr__(self, "signal_whitelist",
                               frozenset(as_signal(s).number for s in self.signal_whitelist))

    @property
    def enabled(self) -> bool:
        return self.exit_info_filter or self.inter_thread_ledger or self.signal_whitelist is not None

    @classmethod
    def parse(cls, text: Optional[str]) -> "DefenseConfig":
        """Parse ``none``, ``exit-info``, ``ledger``, ``whitelist:1,15`` or a ``+``-joined mix."""
        if text is None or text.strip().lower() in ("", "none"):
            return cls()
        kw: dict = {}
        for part in text.split("+"):
            part = part.strip().lower()
            if part in ("exit-info", "exit_info", "exitinfo"):
                kw["exit_info_filter"] = True
            elif part == "ledger":
                kw["inter_thread_ledger"] = True
            elif part.startswith("whitelist"):
                _, _, rest = part.partition(":")
                kw["signal_whitelist"] = frozenset(as_signal(x) for x in rest.split(",") if x.strip())
            else:
                raise ValueError(f"unknown defense {part!r}")
        return cls(**kw)

    def describe(self) -> str:
        parts = []
        if self.signal_whitelist is not None:
            parts.append("whitelist:" + ",".join(str(n) for n in sorted(self.signal_whitelist)))
        if self.exit_info_filter:
            parts.append("exit-info")
        if self.inter_thread_ledger:
            parts.append("ledger")
        return "+".join(parts) or "none"

    def to_dict(self) -> dict:
        return {
            "exit_info_filter": self.exit_info_filter,
            "inter_thread_ledger": self.inter_thread_ledger,
            "signal_whitelist": None if self.signal_whitelist is None else sorted(self.signal_whitelist),
        }


@dataclass
class LedgerEntry:
    signal: SignalSpec
    target_tid: str
    consumed: bool = False


@dataclass
class SignalLedger:
    """Protected shared memory between the threads of one enclave process."""

    pid: str
    entries: list[LedgerEntry] = field(default_factory=list)

    def record(self, s, target_tid: str, sender: EnclaveThread, process: EnclaveProcess) -> LedgerEntry:
        if process.pid != self.pid or sender not in process.threads:
            raise EnclaveStateError("only threads of the owning process may write the ledger")
        if not sender.in_enclave:
            raise EnclaveStateError("ledger writes happen before the ocall, from inside the enclave")
        entry = LedgerEntry(as_signal(s), target_tid)
        self.entries.append(entry)
        return entry

    def check(self, s, target_tid: str) -> bool:
        number = as_signal(s).number
        for entry in self.entries:
            if not entry.consumed and entry.signal.number == number and entry.target_tid == target_tid:
                entry.consumed = True
                return True
        return False

    def forget_thread(self, tid: str) -> None:
        self.entries = [e for e in self.entries if e.target_tid != tid]

    @property
    def pending(self) -> int:
        return sum(not e.consumed for e in self.entries)


def apply_whitelist(event, cfg: DefenseConfig) -> bool:
    if cfg.signal_whitelist is None:
        return True
    return event.signal.number in cfg.signal_whitelist


def apply_exit_info_filter(thread: EnclaveThread) -> bool:
    ssa = thread.ssa
    return ssa is not None and ssa.valid == 1


class Defenses:
    """Stateful defense stage shared by every delivery into one deployment."""

    def __init__(self, cfg: DefenseConfig):
        self.cfg = cfg
        self.ledgers: dict[str, SignalLedger] = {}
        self.filtered_count = 0

    def ledger(self, pid: str) -> SignalLedger:
        return self.ledgers.setdefault(pid, SignalLedger(pid))

    def ledger_record(self, process: EnclaveProcess, sender: EnclaveThread, s, target_tid: str) -> LedgerEntry:
        return self.ledger(process.pid).record(s, target_tid, sender, process)

    def ledger_check(self, process: EnclaveProcess, s, target_tid: str) -> bool:
        return self.ledger(process.pid).check(s, target_tid)

    def screen(self, event, proc: EnclaveProcess, thread: EnclaveThread, p) -> Optional["object"]:
        """Run the configured checks; return a finished trace when filtered, else ``None``."""
        cfg = self.cfg
        if cfg.signal_whitelist is not None:
            if not apply_whitelist(event, cfg):
                p.step("whitelist_check:fail")
                return self._filtered(p)
            p.step("whitelist_check:pass")
        genuine = apply_exit_info_filter(thread)
        if cfg.exit_info_filter and event.signal.is_hw_exception:
            if not genuine:
                p.step("exit_info_filter:reject")
                return self._filtered(p)
            p.step("exit_info_filter:pass")
        if cfg.inter_thread_ledger:
            if genuine:
                p.step("ledger_check:skipped")
            elif self.ledger_check(proc, event.signal, thread.tid):
                p.step("ledger_check:pass")
            else:
                p.step("ledger_check:fail")
                return self._filtered(p)
        return None

    def _filtered(self, p):
        self.filtered_count += 1
        return p.finish(DeliveryOutcome.filtered())

    def thread_exited(self, process: EnclaveProcess, tid: str) -> None:
        self.ledger(process.pid).forget_thread(tid)


def whitelist_of(signals: Iterable) -> DefenseConfig:
    return DefenseConfig(signal_whitelist=frozenset(as_signal(s) for s in signals))
