import numpy as np
import pytest
from hypothesis import given, strategies as st

from sgxsignal.attacker import (
    BlobStore,
    ConfigurationError,
    InjectionStrategy,
    Injector,
    IntegrityError,
    OracleMode,
    ScheduleError,
    SealedBlob,
    Sealer,
    StepOracle,
    StrategyKind,
    UnknownToken,
    UntrustedFileSystem,
    capture_blob,
    craft_siginfo,
    replay_blob,
)
from sgxsignal.enclave import EnclaveThread
from sgxsignal.signals import OriginCode


def test_strategy_validation():
    with pytest.raises(ConfigurationError):
        InjectionStrategy(StrategyKind.EVERY_WINDOW, 8)
    with pytest.raises(ConfigurationError):
        InjectionStrategy(StrategyKind.COUNT_BOUNDED, 8, window="w")
    with pytest.raises(ConfigurationError):
        InjectionStrategy(StrategyKind.COUNT_BOUNDED, 8, window="w", max_count=0)
    with pytest.raises(ConfigurationError):
        InjectionStrategy(StrategyKind.ONE_SHOT, 8, siginfo=craft_siginfo(10))
    assert InjectionStrategy(StrategyKind.EVERY_WINDOW, 8, window="w", max_count=0).budget == 0
    assert InjectionStrategy.one_shot(10).budget == 1


def test_strategy_round_trip():
    s = InjectionStrategy.every_window("SIGFPE", "w", OriginCode.FPE_INTDIV, max_count=5)
    assert InjectionStrategy.from_dict(s.to_dict()) == s


def test_unknown_window_rejected():
    with pytest.raises(ConfigurationError):
        Injector(InjectionStrategy.every_window(8, "nope"), sites=["tanh_loop_body"])


def test_oracle_validation():
    with pytest.raises(ConfigurationError):
        StepOracle(OracleMode.TIMER_SAMPLED)
    with pytest.raises(ConfigurationError):
        StepOracle("timer_sampled", 0)


def _brute_detect(start, length, period):
    return any(t % period == 0 for t in range(start, start + length))


@given(st.lists(st.tuples(st.integers(0, 5000), st.integers(1, 60)), min_size=1, max_size=40),
       st.integers(1, 200))
def test_timer_detection_matches_brute_force(windows, period):
    starts = np.array([w[0] for w in windows])
    lengths = np.array([w[1] for w in windows])
    got = StepOracle(OracleMode.TIMER_SAMPLED, period).detect(starts, lengths)
    assert got.tolist() == [_brute_detect(s, n, period) for s, n in windows]


@given(st.integers(0, 3000), st.integers(0, 3000), st.integers(1, 97))
def test_tick_count_matches_brute_force(a, b, period):
    begin, end = min(a, b), max(a, b)
    oracle = StepOracle(OracleMode.TIMER_SAMPLED, period)
    assert oracle.ticks(begin, end) == sum(t % period == 0 for t in range(begin, end))


def test_exact_oracle_sees_everything():
    assert StepOracle().detect(np.arange(5), np.ones(5)).all()


def test_plan_every_window_with_cap():
    inj = Injector(InjectionStrategy.every_window(8, "w", max_count=3), sites=["w"])
    mask = inj.plan("w", np.arange(0, 100, 10), 5)
    assert mask.tolist() == [True] * 3 + [False] * 7
    assert inj.plan("w", np.arange(5), 1).sum() == 0
    assert inj.log.count == 3 and inj.log.windows == 15
    assert inj.log.timestamps == [0, 10, 20]


def test_plan_ignores_other_sites():
    inj = Injector(InjectionStrategy.every_window(8, "w"), sites=["w", "v"])
    assert not inj.plan("v", np.arange(4), 1).any()
    assert inj.log.windows == 0


def test_plan_timer_sampled_counts_misses_and_exits():
    inj = Injector(InjectionStrategy.every_window(8, "w"), StepOracle("timer_sampled", 10), sites=["w"])
    mask = inj.plan("w", np.array([0, 3, 12, 19]), 2, span=(0, 40))
    assert mask.tolist() == [True, False, False, True]
    assert inj.log.missed_windows == 2
    assert inj.log.aex_count == 4 + 2


def test_fire_requires_thread_inside_enclave():
    inj = Injector(InjectionStrategy.one_shot(10))
    t = EnclaveThread("t")
    t.exit_for_ocall()
    with pytest.raises(ScheduleError):
        inj.fire(t)
    t.resume()
    ev = inj.fire(t)
    assert ev.signal.number == 10 and ev.target == "t"
    assert inj.fire(t) is None and inj.log.count == 1


# -- sealed blobs --------------------------------------------------------------

def test_seal_round_trip_and_tamper():
    sealer = Sealer(b"k" * 32)
    blob = sealer.seal("v1", {"auth": True})
    assert sealer.unseal(blob) == {"auth": True}
    assert blob.version == "v1"
    assert "auth" not in repr(blob)
    with pytest.raises(IntegrityError):
        Sealer(b"x" * 32).unseal(blob)
    forged = SealedBlob("v9", blob._nonce, blob._body, blob._mac)
    with pytest.raises(IntegrityError):
        sealer.unseal(forged)


def test_capture_and_replay():
    sealer = Sealer(b"k" * 32)
    fs = UntrustedFileSystem()
    fs.write("/cfg", sealer.seal("v1", {"auth": False}))
    store = BlobStore(fs)
    token = capture_blob(store, "/cfg")
    fs.write("/cfg", sealer.seal("v2", {"auth": True}))
    replay_blob(store, "/cfg", token)
    assert fs.version("/cfg") == "v1"
    assert sealer.unseal(fs.read("/cfg")) == {"auth": False}
    with pytest.raises(UnknownToken):
        replay_blob(store, "/cfg", sealer.seal("v3", {}))
    with pytest.raises(FileNotFoundError):
        capture_blob(store, "/missing")
