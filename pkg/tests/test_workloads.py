import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from sgxsignal.attacker import InjectionStrategy, Injector, Sealer, UntrustedFileSystem
from sgxsignal.workloads import SITES
from sgxsignal.workloads.banknote import DatasetError, load_banknote, load_or_synthesize, synthetic_banknote
from sgxsignal.workloads.config_server import CONFIG_PATH, ConfigServer
from sgxsignal.workloads.debug_server import DebugServer, Port
from sgxsignal.workloads.estimator import ArithmeticException, StreamingEstimator
from sgxsignal.workloads.mlp import (
    SITE,
    InjectionEffect,
    MlpConfig,
    train_mlp,
    window_layout,
)


def _raise():
    raise ArithmeticException("/ by zero")


def test_estimator_accumulates_batches():
    est = StreamingEstimator.zeros(1)
    for b in ([10.0], [20.0], [30.0]):
        assert est.set_using_data(b)
    assert est.mean.tolist() == [20.0] and est.add_count == 3


def test_estimator_reverts_on_fault():
    est = StreamingEstimator.zeros(1)
    est.set_using_data([10.0])
    assert not est.set_using_data([1000.0], fault=_raise)
    assert est.mean.tolist() == [10.0] and est.reverted == 1 and est.add_count == 1


finite = st.floats(-1e6, 1e6, allow_nan=False)


@given(st.lists(st.tuples(arrays(float, (3, 2), elements=finite), st.booleans()), min_size=1, max_size=8))
def test_estimator_mean_is_mean_of_accepted(batches):
    est = StreamingEstimator.zeros(2)
    kept = []
    for batch, faulted in batches:
        est.set_using_data(batch, fault=_raise if faulted else None)
        if not faulted:
            kept.append(batch)
    if kept:
        np.testing.assert_allclose(est.mean, np.concatenate(kept).mean(axis=0), atol=1e-6)
    else:
        assert not est.mean.any()
    assert est.add_count == len(kept)


def test_estimator_rejects_bad_shapes():
    est = StreamingEstimator.zeros(2)
    with pytest.raises(ValueError):
        est.set_using_data([[1.0, 2.0, 3.0]])
    with pytest.raises(ValueError):
        est.set_using_data(np.zeros((0, 2)))


def test_config_server_reload_and_replay_targets():
    sealer, fs = Sealer(b"s" * 32), UntrustedFileSystem()
    srv = ConfigServer(sealer, fs)
    srv.publish("config", "v1", auth="on")
    srv.publish("binary", "v1")
    srv.load()
    assert srv.config_version == "v1" and srv.auth_enabled
    srv.publish("config", "v2", auth="off")
    srv.handle("reload_config")
    assert srv.config_version == "v2" and not srv.auth_enabled
    fs.remove(CONFIG_PATH)
    srv.handle("reload_config")
    assert srv.history[-1] == ("reload_config", "aborted:missing") and srv.config_version == "v2"
    fs.write(CONFIG_PATH, Sealer(b"x" * 32).seal("v9", {}))
    srv.handle("reload_config")
    assert srv.history[-1] == ("reload_config", "aborted:integrity")
    with pytest.raises(ValueError):
        srv.handle("rm -rf")


def test_debug_server():
    srv = DebugServer(b"secret")
    assert srv.attacker_connect() is None
    srv.handle("js:StartDebugServer")
    assert srv.debug_port is Port.OPEN and srv.attacker_connect() == b"secret" and srv.leaked


def test_sites_registry():
    assert SITES["mlp"] == ("tanh_loop_body",)
    assert "setUsingData_try_block" in SITES["jsat"]


def test_synthetic_banknote_shape():
    d = synthetic_banknote()
    assert d.X.shape == (1372, 4) and d.synthetic
    assert (int((d.y == 0).sum()), int((d.y == 1).sum())) == (762, 610)
    assert synthetic_banknote().sha256 == d.sha256


def test_load_banknote_from_csv(tmp_path):
    rng = np.random.default_rng(1)
    rows = np.column_stack([rng.normal(size=(20, 4)), rng.integers(0, 2, 20)])
    path = tmp_path / "b.txt"
    np.savetxt(path, rows, delimiter=",", fmt=["%.4f"] * 4 + ["%d"])
    d = load_banknote(path)
    assert len(d) == 20 and not d.synthetic
    assert load_or_synthesize(path).sha256 == d.sha256


@pytest.mark.parametrize("content", ["1,2,3\n", "1,2,3,4,7\n", "a,b,c,d,e\n"])
def test_load_banknote_rejects_garbage(tmp_path, content):
    path = tmp_path / "b.txt"
    path.write_text(content)
    with pytest.raises(DatasetError):
        load_banknote(path)


def test_load_banknote_missing_file(tmp_path):
    with pytest.raises(DatasetError):
        load_banknote(tmp_path / "nope.txt")


def test_window_layout_is_strictly_increasing():
    starts, span = window_layout(MlpConfig(), 5)
    assert starts.size == 5 * 18
    assert np.all(np.diff(starts) > 0) and starts[-1] < span


SMALL = MlpConfig(epochs=20)


def test_mlp_learns_without_attack():
    res = train_mlp(synthetic_banknote(), MlpConfig(epochs=100))
    assert res.accuracy > 0.9 and res.injections == 0
    assert res.loop_iterations == 100 * 1096 * 18


def test_mlp_forced_activation_is_exactly_one():
    inj = Injector(InjectionStrategy.every_window(8, SITE), sites=[SITE])
    res = train_mlp(synthetic_banknote(), SMALL, inj, record_last_epoch=True)
    assert res.injections == res.loop_iterations == res.forced
    assert res.forced_mismatches == 0


def test_mlp_injection_effects():
    data = synthetic_banknote()
    clean = train_mlp(data, SMALL)
    inj = Injector(InjectionStrategy.every_window(8, SITE), sites=[SITE])
    ignored = train_mlp(data, SMALL, inj, effect=InjectionEffect.NONE)
    assert ignored.accuracy == clean.accuracy and ignored.injections > 0
    inj = Injector(InjectionStrategy.every_window(8, SITE), sites=[SITE])
    crashed = train_mlp(data, SMALL, inj, effect=InjectionEffect.CRASH)
    assert crashed.crashed and crashed.accuracy is None and crashed.loop_iterations == 1


def test_mlp_config_validation():
    with pytest.raises(ValueError):
        MlpConfig(hidden=(6, 6))
    with pytest.raises(ValueError):
        MlpConfig(lr=0)


def test_mlp_zero_budget_attack_is_bitwise_identity():
    data = synthetic_banknote()
    clean = train_mlp(data, SMALL)
    inj = Injector(InjectionStrategy.every_window(8, SITE, max_count=0), sites=[SITE])
    attacked = train_mlp(data, SMALL, inj)
    assert attacked.injections == 0 and attacked.accuracy == clean.accuracy
    for a, b in zip(clean.weights, attacked.weights):
        assert np.array_equal(a, b)


@given(st.lists(st.sampled_from(["reload_config", "reload_binary", "publish_config", "publish_binary",
                                 "drop_config"]), max_size=20))
def test_config_server_versions_replay_from_log(ops):
    def run(script):
        sealer, fs = Sealer(b"s" * 32), UntrustedFileSystem()
        srv = ConfigServer(sealer, fs)
        for i, op in enumerate(script):
            if op.startswith("publish_"):
                srv.publish(op.split("_")[1], f"v{i}")
            elif op == "drop_config":
                fs.remove(CONFIG_PATH)
            else:
                srv.handle(op)
        return srv.config_version, srv.binary_version, list(srv.history)

    assert run(ops) == run(list(ops))
