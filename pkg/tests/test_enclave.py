import pytest
from hypothesis import given, strategies as st

from sgxsignal.enclave import (
    BlockedByKernel,
    EnclaveProcess,
    EnclaveStateError,
    EnclaveThread,
    ExitInfo,
    ExitType,
    HandlerSpec,
    ReservedByRuntime,
    ThreadMode,
)
from sgxsignal.signals import Vector, signal_by_number


def test_register_handler_examples():
    t = EnclaveThread("t")
    assert t.register_handler(10, "a").signal.number == 10
    for n in (9, 19):
        with pytest.raises(BlockedByKernel):
            t.register_handler(n, "a")
    with pytest.raises(BlockedByKernel):
        HandlerSpec(signal_by_number(9), "a")


def test_runtime_reserved_signal():
    t = EnclaveThread("t", reserved=frozenset({12}))
    with pytest.raises(ReservedByRuntime):
        t.register_handler(12, "a")


@pytest.mark.parametrize("vector", [Vector.DIVIDE_ERROR, Vector.PAGE_FAULT])
def test_genuine_exception_records_valid_exit(vector):
    t = EnclaveThread("t")
    rec = t.raise_genuine_hw_exception(vector)
    assert rec == ExitInfo(vector, ExitType.HW, 1)
    assert t.mode is ThreadMode.EXITED_ASYNC and t.ssa is rec
    with pytest.raises(EnclaveStateError):
        t.raise_genuine_hw_exception(vector)


def test_injected_exit_is_invalid_every_time():
    t = EnclaveThread("t")
    assert t.async_exit_injected().valid == 0
    t.resume()
    assert t.ssa is None and t.mode is ThreadMode.IN_ENCLAVE
    assert t.async_exit_injected().valid == 0


def test_resume_lifecycle():
    t = EnclaveThread("t")
    with pytest.raises(EnclaveStateError):
        t.resume()
    t.exit_for_ocall()
    assert t.mode is ThreadMode.EXITED_OCALL and t.ssa is None
    t.resume()
    assert t.in_enclave


def test_sgx1_thread_keeps_no_exit_record():
    t = EnclaveThread("t", exit_info_hw=False)
    assert t.raise_genuine_hw_exception(Vector.DIVIDE_ERROR) is None
    assert t.ssa is None


def test_exit_info_invariants():
    with pytest.raises(ValueError):
        ExitInfo(None, ExitType.HW, 1)
    with pytest.raises(ValueError):
        ExitInfo(Vector.PAGE_FAULT, ExitType.HW, 2)


def test_process_needs_a_thread_and_finds_threads():
    with pytest.raises(ValueError):
        EnclaveProcess("p", [])
    p = EnclaveProcess.single("p", ("a", "b"))
    assert p.thread().tid == "a" and p.thread("b").tid == "b" and p.main.tid == "a"
    with pytest.raises(KeyError):
        p.thread("zz")


_ops = st.lists(st.sampled_from(["genuine", "inject", "ocall", "resume"]), max_size=30)


@given(_ops)
def test_valid_exit_only_right_after_genuine_exception(ops):
    t = EnclaveThread("t")
    for op in ops:
        try:
            if op == "genuine":
                t.raise_genuine_hw_exception(Vector.DIVIDE_ERROR)
            elif op == "inject":
                t.async_exit_injected()
            elif op == "ocall":
                t.exit_for_ocall()
            else:
                t.resume()
        except EnclaveStateError:
            continue
        if t.ssa is not None and t.ssa.valid == 1:
            assert op == "genuine"


@given(st.lists(st.integers(1, 31), max_size=40))
def test_handler_table_never_holds_kill_or_stop(numbers):
    t = EnclaveThread("t")
    for n in numbers:
        try:
            t.register_handler(n, f"h{n}")
        except BlockedByKernel:
            assert n in (9, 19)
    assert not {9, 19} & set(t.handlers)


def test_page_fault_resumes_without_leaving_a_record():
    t = EnclaveThread("t")
    rec = t.page_fault_resolved_by_os()
    assert rec.vector is Vector.PAGE_FAULT and rec.valid == 1
    assert t.in_enclave and t.ssa is None
