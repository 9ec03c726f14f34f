import json
import os
from pathlib import Path

import pytest

from sgxsignal.attacker import ConfigurationError
from sgxsignal.defenses import DefenseConfig
from sgxsignal.languages import LanguageId
from sgxsignal.policies import VULNERABLE_POLICIES, PolicyId
from sgxsignal.scenarios import (
    SCHEMA_VERSION,
    ScenarioConfig,
    defense_blocks,
    dumps_report,
    expected_code,
    run_scenario,
    strip_volatile,
)
from sgxsignal.signals import OriginCode, SigInfo, signal_by_number

GOLDEN = Path(__file__).parent / "golden"
CANNED = {
    "nginx_scone_none": {"scenario": "nginx", "policy": "Scone"},
    "nodejs_scone_none": {"scenario": "nodejs", "policy": "Scone", "schedules": 50},
    "nodejs_scone_ledger": {"scenario": "nodejs", "policy": "Scone", "defense": "ledger", "schedules": 50},
}


def _report(d):
    return strip_volatile(run_scenario(ScenarioConfig.from_dict(d)))


@pytest.mark.parametrize("name", sorted(CANNED))
def test_golden_report(name):
    text = dumps_report(_report(CANNED[name]))
    path = GOLDEN / f"{name}.json"
    if os.environ.get("UPDATE_GOLDEN"):
        path.write_text(text, encoding="utf-8")
    assert text == path.read_text(encoding="utf-8")


def test_report_shape_and_timestamp(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    report = run_scenario(ScenarioConfig.from_dict({"scenario": "custom", "policy": "Scone",
                                                    "language": "C", "attack": {"signal": 10}}))
    assert report["schema_version"] == SCHEMA_VERSION
    assert report["generated_at"] == "1970-01-01T00:00:00+00:00"
    assert {"config", "fixtures_sha256", "outcome", "checks", "passed", "filtered_count"} <= set(report)
    assert dumps_report(report).endswith("}\n")
    assert "generated_at" not in strip_volatile(report)


def test_config_round_trip():
    cfg = ScenarioConfig.from_dict({"scenario": "jsat", "policy": "asylo", "defense": "exit-info", "seed": 3})
    assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("bad", [
    {"scenario": "jsat", "policy": "Scone", "language": "C"},
    {"scenario": "custom", "policy": "Scone", "language": "C"},
    {"scenario": "custom", "policy": "Scone", "attack": {"signal": 8}},
    {"scenario": "nginx", "policy": "Scone", "attack": {"signal": 1}},
    {"scenario": "mlp", "policy": "Scone", "attack": {"signal": 8, "kind": "EveryWindow", "window": "nope"}},
    {"scenario": "doom", "policy": "Scone"},
    {"scenario": "nginx", "policy": "SGX-LKL"},
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigurationError):
        ScenarioConfig.from_dict(bad)


def test_defense_blocks():
    assert defense_blocks(DefenseConfig.parse("ledger"), 1)
    assert defense_blocks(DefenseConfig.parse("exit-info"), 8)
    assert not defense_blocks(DefenseConfig.parse("exit-info"), 1)
    assert defense_blocks(DefenseConfig.parse("whitelist:8"), 1)
    assert not defense_blocks(DefenseConfig(), 8)


def test_expected_code_examples():
    fpe = signal_by_number(8)
    intdiv = SigInfo(fpe, OriginCode.FPE_INTDIV)
    none = DefenseConfig()
    assert expected_code(PolicyId.ASYLO, LanguageId.JAVA, 8, intdiv, none) == {"H"}
    assert expected_code(PolicyId.SCONE, LanguageId.WASM, 8, intdiv, none) == {"C"}
    assert expected_code(PolicyId.SCONE, LanguageId.C, 8, intdiv, DefenseConfig.parse("exit-info")) == {"F"}
    assert expected_code(PolicyId.MYSTIKOS, LanguageId.C, 8, intdiv, none) is None


def test_nginx_ledger_blocks_attack_and_costs_reload():
    report = _report({"scenario": "nginx", "policy": "Scone", "defense": "ledger"})
    assert report["passed"] is True
    assert report["workload"]["config_version"] == "v2"
    assert report["functionality_lost"] is True and report["filtered_count"] == 2


@pytest.mark.parametrize("name", ["nginx", "nodejs", "jsat", "mlp"])
@pytest.mark.parametrize("policy", [p.value for p in VULNERABLE_POLICIES])
@pytest.mark.parametrize("defense", ["none", "exit-info", "ledger"])
def test_every_scenario_matches_reference(name, policy, defense):
    d = {"scenario": name, "policy": policy, "defense": defense, "schedules": 20, "calls": 24}
    if name == "mlp":
        d["epochs"] = 3
    report = _report(d)
    assert report["passed"] is not False, report["checks"]


@pytest.mark.parametrize("name", ["nginx", "nodejs", "jsat"])
def test_scenarios_are_deterministic(name):
    d = {"scenario": name, "policy": "Gramine", "seed": 7, "schedules": 30}
    assert dumps_report(_report(d)) == dumps_report(_report(d))


def test_policy_without_reference_row():
    report = _report({"scenario": "custom", "policy": "Mystikos", "language": "C", "attack": {"signal": 10}})
    assert report["passed"] is None
