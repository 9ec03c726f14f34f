import itertools
from collections import Counter

import pytest

from sgxsignal.defenses import DefenseConfig, Defenses, SignalLedger, whitelist_of
from sgxsignal.enclave import EnclaveProcess, EnclaveStateError
from sgxsignal.policies import (
    InjectionEvent,
    InjectionSource,
    PolicyId,
    get_policy,
)
from sgxsignal.signals import OutcomeKind

HW = (4, 5, 7, 8, 11, 31)


def test_parse_and_describe():
    cfg = DefenseConfig.parse("whitelist:1,SIGTERM+exit-info+ledger")
    assert cfg.signal_whitelist == frozenset({1, 15})
    assert cfg.describe() == "whitelist:1,15+exit-info+ledger"
    assert DefenseConfig.parse(cfg.describe()) == cfg
    assert not DefenseConfig.parse("none").enabled
    assert cfg.to_dict()["signal_whitelist"] == [1, 15]
    with pytest.raises(ValueError):
        DefenseConfig.parse("firewall")


def test_whitelist_filters_before_anything_else():
    pol = get_policy("Scone")
    proc = pol.new_process()
    for n in (1, 15):
        pol.install_app_handler(proc.main, n, f"h{n}")
    d = Defenses(whitelist_of([1]))
    trace = pol.deliver(InjectionEvent.make(15), proc, d)
    assert trace.kind is OutcomeKind.FILTERED_BY_RUNTIME and "whitelist_check:fail" in trace.steps
    assert pol.deliver(InjectionEvent.make(1), proc, d).kind is OutcomeKind.HANDLER_EXECUTED
    assert d.filtered_count == 1


def test_check_order_in_trace():
    pol = get_policy("Scone")
    proc = pol.new_process()
    pol.install_app_handler(proc.main, 8, "h")
    d = Defenses(DefenseConfig.parse("whitelist:8+exit-info+ledger"))
    trace = pol.deliver(InjectionEvent.make(8, InjectionSource.GENUINE_HW_EXCEPTION), proc, d)
    checks = [s for s in trace.steps if ":" in s]
    assert checks == ["whitelist_check:pass", "exit_info_filter:pass", "ledger_check:skipped"]


_ADOPTERS = [p for p in PolicyId if get_policy(p).exit_info_hw and get_policy(p).hw_exception_interface is not False
             and get_policy(p).hw_exception_signals]
_SOURCES = [s for s in InjectionSource if s is not InjectionSource.GENUINE_HW_EXCEPTION]


@pytest.mark.parametrize("policy", _ADOPTERS, ids=lambda p: p.value)
def test_exit_info_filter_separates_genuine_from_injected(policy):
    pol = get_policy(policy)
    for n in sorted(pol.hw_exception_signals):
        proc = pol.new_process(co_resident=True)
        pol.install_app_handler(proc.main, n, "h")
        d = Defenses(DefenseConfig(exit_info_filter=True))
        genuine = pol.deliver(InjectionEvent.make(n, InjectionSource.GENUINE_HW_EXCEPTION), proc, d)
        assert genuine.kind is OutcomeKind.HANDLER_EXECUTED
        for source in _SOURCES:
            trace = pol.deliver(InjectionEvent.make(n, source), proc, d)
            assert trace.kind is not OutcomeKind.HANDLER_EXECUTED, (n, source)
            consulted = [s for s in trace.steps if s.startswith("exit_info_filter")]
            assert consulted in ([], ["exit_info_filter:reject"])
            if proc.crashed:
                proc = pol.new_process(co_resident=True)
                pol.install_app_handler(proc.main, n, "h")


def test_ledger_record_rules():
    proc = EnclaveProcess.single("p", ("a", "b"))
    other = EnclaveProcess.single("q", ("x",))
    ledger = SignalLedger("p")
    with pytest.raises(EnclaveStateError):
        ledger.record(10, "b", other.main, other)
    with pytest.raises(EnclaveStateError):
        ledger.record(10, "b", other.main, proc)
    proc.thread("a").exit_for_ocall()
    with pytest.raises(EnclaveStateError):
        ledger.record(10, "b", proc.thread("a"), proc)
    proc.thread("a").resume()
    ledger.record(10, "b", proc.thread("a"), proc)
    assert ledger.pending == 1
    assert not ledger.check(10, "a") and ledger.check(10, "b") and not ledger.check(10, "b")


def test_thread_exit_drops_its_entries():
    proc = EnclaveProcess.single("p", ("a", "b"))
    d = Defenses(DefenseConfig(inter_thread_ledger=True))
    d.ledger_record(proc, proc.thread("a"), 10, "b")
    d.thread_exited(proc, "b")
    assert d.ledger("p").pending == 0


# every sequence of up to four ledger writes and deliveries over two threads and two signals
_THREADS = ("a", "b")
_SIGS = (10, 12)
_ALPHABET = ([("record", snd, s, tgt) for snd in _THREADS for s in _SIGS for tgt in _THREADS]
             + [("deliver", None, s, tgt) for s in _SIGS for tgt in _THREADS])


def _sequences(max_len=4):
    for k in range(max_len + 1):
        yield from itertools.product(_ALPHABET, repeat=k)


def test_ledger_exhaustive_sequences():
    pol = get_policy("Scone")
    checked = 0
    for seq in _sequences():
        proc = pol.new_process("p", _THREADS)
        for t in proc.threads:
            for s in _SIGS:
                pol.install_app_handler(t, s, f"h{s}")
        d = Defenses(DefenseConfig(inter_thread_ledger=True))
        announced: Counter = Counter()
        delivered = 0
        for op, sender, s, tgt in seq:
            if op == "record":
                d.ledger_record(proc, proc.thread(sender), s, tgt)
                announced[(s, tgt)] += 1
                continue
            trace = pol.deliver(InjectionEvent.make(s, InjectionSource.OS_TKILL_THREAD, target=tgt), proc, d)
            if announced[(s, tgt)]:
                announced[(s, tgt)] -= 1
                delivered += 1
                assert trace.kind is OutcomeKind.HANDLER_EXECUTED, seq
            else:
                assert trace.kind is OutcomeKind.FILTERED_BY_RUNTIME, seq
            checked += 1
        assert d.ledger("p").pending == sum(announced.values())
        recorded = sum(op == "record" for op, *_ in seq)
        assert delivered + d.ledger("p").pending == recorded
    assert checked > 20000
