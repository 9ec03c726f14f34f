"""End-to-end attack scenarios and their JSON reports.

A scenario wires one runtime policy, one language model, an optional defense
and an attacker around a victim workload, runs it to completion and compares
the result with what the measured tables predict. Predictions come from the
fixtures, never from the simulation itself.
"""
from __future__ import annotations

import copy
import datetime as _dt
import enum
import json
import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .attacker import (
    BlobStore,
    ConfigurationError,
    InjectionStrategy,
    Injector,
    StepOracle,
    StrategyKind,
    Sealer,
    UntrustedFileSystem,
    craft_siginfo,
)
from .defenses import DefenseConfig, Defenses
from .enclave import EnclaveProcess, HandlerSource, ReservedByRuntime
from .languages import InvocationKind, LanguageId, LanguageModel, SignalMode, get_language
from .policies import (
    InjectionEvent,
    InjectionSource,
    MultiProcessPolicy,
    PolicyId,
    RuntimePolicy,
    get_policy,
)
from .signals import OriginCode, OutcomeKind, SigInfo, as_signal
from .tables import fixture_digest, load_grid
from .workloads import SITES
from .workloads.banknote import load_or_synthesize
from .workloads.config_server import BINARY_PATH, CONFIG_PATH, HANDLERS, ConfigServer
from .workloads.debug_server import DebugServer
from .workloads.estimator import ArithmeticException, StreamingEstimator
from .workloads.mlp import InjectionEffect, MlpConfig, train_mlp

__all__ = [
    "SCHEMA_VERSION",
    "ScenarioName",
    "ScenarioConfig",
    "run_scenario",
    "dumps_report",
    "strip_volatile",
    "expected_code",
    "MLP_THRESHOLDS",
]

SCHEMA_VERSION = 1
VOLATILE_KEYS = ("generated_at",)


class ScenarioName(enum.Enum):
    NGINX = "nginx"
    NODEJS = "nodejs"
    JSAT = "jsat"
    MLP = "mlp"
    CUSTOM = "custom"


REQUIRED_LANGUAGE = {
    ScenarioName.NGINX: LanguageId.C,
    ScenarioName.NODEJS: LanguageId.JS,
    ScenarioName.JSAT: LanguageId.JAVA,
    ScenarioName.MLP: LanguageId.C,
}

#: (baseline accuracy floor, minimum drop under attack)
MLP_THRESHOLDS = {"full": (0.90, 0.20), "fast": (0.85, 0.15)}
MLP_FAST_EPOCHS = 100
INJECTION_COUNT_TOLERANCE = 0.20


def _default_attack(name: ScenarioName) -> Optional[InjectionStrategy]:
    if name is ScenarioName.NODEJS:
        return InjectionStrategy.one_shot(10)
    if name is ScenarioName.JSAT:
        return InjectionStrategy.every_window(8, "setUsingData_try_block", OriginCode.FPE_INTDIV)
    if name is ScenarioName.MLP:
        return InjectionStrategy.every_window(8, "tanh_loop_body", OriginCode.FPE_INTDIV)
    return None


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: ScenarioName
    policy: PolicyId
    language: Optional[LanguageId] = None
    defense: DefenseConfig = field(default_factory=DefenseConfig)
    seed: int = 0
    attack: Optional[InjectionStrategy] = None
    oracle: StepOracle = field(default_factory=StepOracle)
    dataset: Optional[str] = None
    fast: bool = False
    epochs: Optional[int] = None
    calls: int = 240
    schedules: int = 1000

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        try:
            set_("scenario", ScenarioName(self.scenario))
        except ValueError:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}") from None
        try:
            set_("policy", PolicyId.parse(self.policy))
            required = REQUIRED_LANGUAGE.get(self.scenario)
            lang = LanguageId.parse(self.language) if self.language is not None else required
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        if lang is None:
            raise ConfigurationError("the custom scenario needs an explicit language")
        if required is not None and lang is not required:
            raise ConfigurationError(
                f"scenario {self.scenario.value} runs {required.value} code, not {lang.value}")
        set_("language", lang)
        if isinstance(self.defense, str) or self.defense is None:
            set_("defense", DefenseConfig.parse(self.defense))
        if isinstance(self.oracle, dict):
            set_("oracle", StepOracle(self.oracle.get("mode", "exact"), self.oracle.get("timer_period")))
        if isinstance(self.attack, dict):
            set_("attack", InjectionStrategy.from_dict(self.attack))
        if self.scenario is ScenarioName.NGINX and self.attack is not None:
            raise ConfigurationError("the nginx scenario uses its fixed replay + SIGHUP/SIGUSR1 attack")
        if self.scenario is ScenarioName.CUSTOM and self.attack is None:
            raise ConfigurationError("the custom scenario needs an attack signal")
        if self.attack is None:
            set_("attack", _default_attack(self.scenario))
        if self.attack is not None and self.attack.window is not None:
            self.attack.window.resolve(SITES[self.scenario.value])
        if self.calls < 1 or self.schedules < 0:
            raise ConfigurationError("calls must be >= 1 and schedules >= 0")
        if self.epochs is not None and self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")

    @property
    def mlp_epochs(self) -> int:
        if self.epochs is not None:
            return self.epochs
        return MLP_FAST_EPOCHS if self.fast else 2000

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.value,
            "policy": self.policy.value,
            "language": self.language.value,
            "defense": self.defense.to_dict(),
            "seed": self.seed,
            "attack": None if self.attack is None else self.attack.to_dict(),
            "oracle": self.oracle.to_dict(),
            "fast": self.fast,
            "epochs": self.epochs,
            "calls": self.calls,
            "schedules": self.schedules,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        name = d.pop("scenario", None) or d.pop("name", None)
        if name is None:
            raise ConfigurationError("config needs a scenario name")
        defense = d.pop("defense", None)
        if isinstance(defense, dict):
            defense = DefenseConfig(
                exit_info_filter=bool(defense.get("exit_info_filter", False)),
                inter_thread_ledger=bool(defense.get("inter_thread_ledger", False)),
                signal_whitelist=(None if defense.get("signal_whitelist") is None
                                  else frozenset(defense["signal_whitelist"])),
            )
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        if "policy" not in d:
            raise ConfigurationError("config needs a policy")
        return cls(scenario=name, defense=defense, **d)


# ---------------------------------------------------------------------------
# predictions from the fixtures
# ---------------------------------------------------------------------------

def _code(kind: OutcomeKind) -> str:
    return "F" if kind is OutcomeKind.FILTERED_BY_RUNTIME else kind.cell


def defense_blocks(defense: DefenseConfig, signal) -> bool:
    """Whether the configured defense stops an attacker-sourced ``signal`` that reached it."""
    s = as_signal(signal)
    if defense.signal_whitelist is not None and s.number not in defense.signal_whitelist:
        return True
    if defense.exit_info_filter and s.is_hw_exception:
        return True
    return defense.inter_thread_ledger


def expected_code(policy: PolicyId, language: LanguageId, signal, siginfo: Optional[SigInfo],
                  defense: DefenseConfig, fixtures=None) -> Optional[frozenset]:
    """Outcome codes (H/C/N/F) the fixtures allow for one injected signal.

    ``None`` when the policy has no measured row.
    """
    s = as_signal(signal)
    table2 = load_grid("table2", fixtures)
    if policy.value not in table2.rows:
        return None
    runtime = table2.cell(policy.value, s.number)
    if runtime != "H":
        # the runtime ends the delivery before or at the point a defense would look
        return frozenset({runtime, "F"}) if defense.enabled else frozenset({runtime})
    if defense_blocks(defense, s):
        return frozenset({"F"})
    lang = get_language(language)
    cell = load_grid("table4", fixtures).cell(language.value, s.number)
    if (cell == "H" and lang.requires_fault_code and s.number in lang.exception_map
            and siginfo is not None and not siginfo.claims_arithmetic_fault):
        cell = "C"
    return frozenset({cell})


# ---------------------------------------------------------------------------
# shared deployment plumbing
# ---------------------------------------------------------------------------

@dataclass
class Deployment:
    policy: RuntimePolicy
    language: LanguageModel
    proc: EnclaveProcess
    defenses: Defenses
    source: InjectionSource

    @classmethod
    def build(cls, cfg: ScenarioConfig) -> "Deployment":
        policy = get_policy(cfg.policy)
        multi = isinstance(policy, MultiProcessPolicy)
        proc = policy.new_process("victim", ("main", "worker"), co_resident=multi)
        # an attacker-controlled co-resident process is the way in on multi-process library OSes
        source = InjectionSource.CORESIDENT_ENCLAVE_PROCESS if multi else InjectionSource.OS_KILL
        return cls(policy, get_language(cfg.language), proc, Defenses(cfg.defense), source)

    @property
    def main(self):
        return self.proc.main

    def install(self, signal, action: str, via=HandlerSource.APP_EXPLICIT) -> bool:
        try:
            self.policy.install_app_handler(self.main, signal, action, via)
        except ReservedByRuntime:
            return False
        return True

    def install_language_defaults(self) -> None:
        for n, effect in self.language.default_handlers.items():
            if n in (9, 19):
                continue
            self.install(n, f"{self.language.id.value.lower()}:{effect.value}", HandlerSource.LANGUAGE_DEFAULT)

    def deliver(self, event: InjectionEvent, defenses: Optional[Defenses] = None):
        """Runtime pipeline, then the language runtime. Returns (code, action or None)."""
        trace = self.policy.deliver(event, self.proc, defenses if defenses is not None else self.defenses)
        if trace.kind is not OutcomeKind.HANDLER_EXECUTED:
            return _code(trace.kind), None, trace
        invocation = self.language.translate(event.signal, event.siginfo)
        kind = invocation.kind.outcome
        if kind is OutcomeKind.CRASH:
            self.proc.crashed = True
        if kind is not OutcomeKind.HANDLER_EXECUTED:
            return _code(kind), None, trace
        return "H", (trace.outcome.handler_id, invocation), trace

    def probe(self, signal, source=InjectionSource.OS_KILL) -> str:
        """Outcome of one benign external signal, without touching real state."""
        shadow = copy.deepcopy(self)
        code, _, _ = shadow.deliver(InjectionEvent.make(signal, source, sender="admin"))
        return code


def _fixture_hashes(fixtures) -> dict:
    return {name: fixture_digest(name, fixtures) for name in ("table2", "table4", "table5")}


def _judge(checks: dict) -> Optional[bool]:
    if not checks:
        return None
    return all(checks.values())


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

def _run_nginx(cfg: ScenarioConfig, fixtures) -> dict:
    dep = Deployment.build(cfg)
    rng = np.random.default_rng(cfg.seed)
    sealer = Sealer(rng.bytes(32))
    fs = UntrustedFileSystem()
    server = ConfigServer(sealer, fs)
    for n, action in HANDLERS.items():
        dep.install(n, action)

    # t0: v1 deployed; the attacker copies the sealed files
    server.publish("config", "v1", auth="off")
    server.publish("binary", "v1")
    server.load()
    store = BlobStore(fs)
    old_config = store.capture(CONFIG_PATH)
    old_binary = store.capture(BINARY_PATH)

    # t1..t4: the administrator upgrades both and signals the server
    admin_channel = {}
    functionality_lost = False
    for which, n in (("config", 1), ("binary", 10)):
        server.publish(which, "v2", **({"auth": "auth_jwt"} if which == "config" else {}))
        external = dep.probe(n)
        undefended = _probe_without_defense(dep, n)
        if external == "H":
            code, hit, _ = dep.deliver(InjectionEvent.make(n, InjectionSource.OS_KILL, sender="admin"))
            assert code == "H"
            server.handle(hit[0])
            admin_channel[which] = "signal"
        else:
            # fall back to a trusted management call that invokes the reload directly
            server.handle(HANDLERS[n])
            admin_channel[which] = "in_enclave"
            if undefended == "H":
                functionality_lost = True
    upgraded = (server.config_version, server.binary_version)

    # t5..t8: replay the old blobs and fire the reload signals
    injections = []
    log = {"strategy": "Replay+OneShot", "signals": [1, 10], "count": 0, "missed_windows": 0, "aex_count": 0}
    for which, n, token, path in (("config", 1, old_config, CONFIG_PATH), ("binary", 10, old_binary, BINARY_PATH)):
        store.replay(path, token)
        if dep.proc.crashed:
            injections.append({"signal": n, "outcome": "target_dead"})
            continue
        injector = Injector(InjectionStrategy.one_shot(n), cfg.oracle, source=dep.source)
        event = injector.fire(dep.main)
        code, hit, trace = dep.deliver(event)
        if hit is not None:
            server.handle(hit[0])
        log["count"] += injector.log.count
        log["aex_count"] += injector.log.aex_count
        injections.append({"signal": n, "outcome": code, "steps": list(trace.steps)})

    workload = {
        "config_version": server.config_version,
        "binary_version": server.binary_version,
        "auth_enabled": server.auth_enabled,
        "versions_after_admin_upgrade": list(upgraded),
        "admin_channel": admin_channel,
        "history": [list(h) for h in server.history],
    }
    outcome = {"injections": injections, "crashed": dep.proc.crashed}

    # fixture-derived expectation, walked through the two injections in order
    expected: dict = {}
    checks: dict = {}
    allowed = [expected_code(cfg.policy, cfg.language, n, craft_siginfo(n), cfg.defense, fixtures) for n in (1, 10)]
    if all(a is not None for a in allowed):
        alive: Optional[bool] = True
        versions = {"config_version": "v2", "binary_version": "v2"}
        for key, codes in zip(("config_version", "binary_version"), allowed):
            if alive is False:
                continue
            if codes == {"H"} and alive:
                versions[key] = "v1"
            elif "H" in codes or alive is None:
                versions[key] = None  # cannot be predicted
            if codes == {"C"}:
                alive = False if alive else None
            elif "C" in codes:
                alive = None
        expected = {k: v for k, v in versions.items() if v is not None}
        expected["cells"] = {str(n): sorted(a) for n, a in zip((1, 10), allowed)}
        if alive is not None:
            expected["crashed"] = not alive
        for k in ("config_version", "binary_version"):
            if k in expected:
                checks[k] = workload[k] == expected[k]
        if "crashed" in expected:
            checks["crashed"] = outcome["crashed"] == expected["crashed"]
        checks["admin_upgrade_applied"] = upgraded == ("v2", "v2")
        for inj, codes in zip(injections, allowed):
            if inj["outcome"] != "target_dead":
                checks[f"signal_{inj['signal']}_outcome"] = inj["outcome"] in codes
    return dict(workload=workload, outcome=outcome, injection_log=log, expected=expected, checks=checks,
                filtered_count=dep.defenses.filtered_count, functionality_lost=functionality_lost)


def _probe_without_defense(dep: Deployment, n: int) -> str:
    shadow = copy.deepcopy(dep)
    shadow.defenses = Defenses(DefenseConfig())
    return shadow.probe(n)


def _run_nodejs(cfg: ScenarioConfig, fixtures) -> dict:
    rng = np.random.default_rng(cfg.seed)
    secret = rng.bytes(16).hex()
    dep = Deployment.build(cfg)
    dep.install_language_defaults()
    server = DebugServer(secret.encode())
    strategy = cfg.attack
    injector = Injector(strategy, cfg.oracle, SITES["nodejs"], source=dep.source)
    server.serve_request()
    got = None
    event = injector.fire(dep.main)
    code, hit, trace = dep.deliver(event)
    if hit is not None:
        server.handle(hit[0])
    if not dep.proc.crashed:
        got = server.attacker_connect()
        second = server.attacker_connect()
        assert second == got

    leaks = _nodejs_schedules(cfg, rng)
    workload = {
        "leaked": server.leaked,
        "debug_port": server.debug_port.value,
        "secret_matches": got is not None and got == secret.encode(),
        "no_injection_schedules": cfg.schedules,
        "no_injection_leaks": leaks,
    }
    outcome = {"delivery": code, "steps": list(trace.steps), "crashed": dep.proc.crashed}
    allowed = expected_code(cfg.policy, cfg.language, strategy.signal, strategy.siginfo, cfg.defense, fixtures)
    expected: dict = {"no_injection_leaks": 0}
    checks = {"no_injection_leaks": leaks == 0}
    opens_debugger = dep.language.default_handler_effect(strategy.signal) is not None and \
        dep.language.default_handler_effect(strategy.signal).value == "StartDebugServer"
    if allowed is not None:
        expected["cells"] = sorted(allowed)
        expected["injections"] = 1
        checks["injections"] = injector.log.count == 1
        checks["delivery"] = code in allowed
        if allowed == {"H"}:
            expected["leaked"] = opens_debugger
        elif "H" not in allowed:
            expected["leaked"] = False
        if "leaked" in expected:
            checks["leaked"] = server.leaked == expected["leaked"]
    return dict(workload=workload, outcome=outcome, injection_log=injector.log.to_dict(), expected=expected,
                checks=checks, filtered_count=dep.defenses.filtered_count, functionality_lost=False)


_BENIGN_STEPS = ("serve_request", "attacker_connect", "signal")


def _nodejs_schedules(cfg: ScenarioConfig, rng: np.random.Generator) -> int:
    """Random schedules without any SIGUSR1; count runs where the secret leaked."""
    others = [n for n in range(1, 32) if n != 10]
    leaks = 0
    for _ in range(cfg.schedules):
        dep = Deployment.build(cfg)
        dep.install_language_defaults()
        server = DebugServer(b"secret")
        for _ in range(int(rng.integers(1, 12))):
            if dep.proc.crashed:
                break
            step = _BENIGN_STEPS[int(rng.integers(len(_BENIGN_STEPS)))]
            if step == "serve_request":
                server.serve_request()
            elif step == "attacker_connect":
                server.attacker_connect()
            else:
                n = others[int(rng.integers(len(others)))]
                _, hit, _ = dep.deliver(InjectionEvent.make(n, dep.source))
                if hit is not None:
                    server.handle(hit[0])
        leaks += server.leaked
    return leaks


JSAT_DIM = 3
JSAT_BATCH = 8
JSAT_CALL_SPAN = 5000
JSAT_TRY_COST = 600


def _jsat_batches(cfg: ScenarioConfig) -> list:
    rng = np.random.default_rng(cfg.seed)
    return [rng.normal(loc=3.0, scale=2.0, size=(JSAT_BATCH, JSAT_DIM)) for _ in range(cfg.calls)]


def _run_jsat(cfg: ScenarioConfig, fixtures) -> dict:
    batches = _jsat_batches(cfg)
    dep = Deployment.build(cfg)
    dep.install_language_defaults()
    est = StreamingEstimator.zeros(JSAT_DIM)
    initial = est.mean.copy()
    injector = Injector(cfg.attack, cfg.oracle, SITES["jsat"], source=dep.source)
    codes: dict = {}
    calls = 0

    for i, batch in enumerate(batches):
        if dep.proc.crashed:
            break
        t = i * JSAT_CALL_SPAN
        hit_window = bool(injector.plan("setUsingData_try_block", [t], [JSAT_TRY_COST],
                                        span=(t, t + JSAT_CALL_SPAN))[0])
        fault = None
        if hit_window:
            code, hit, _ = dep.deliver(injector.event(dep.main.tid))
            codes[code] = codes.get(code, 0) + 1
            if dep.proc.crashed:
                break
            if hit is not None and hit[1].kind is InvocationKind.CATCH_BLOCK:
                def fault():
                    raise ArithmeticException("/ by zero")
        est.set_using_data(batch, fault)
        calls += 1

    brute = np.concatenate(batches).mean(axis=0)
    accepted = np.concatenate(est.accepted).mean(axis=0) if est.accepted else initial
    workload = {
        "mean": est.mean.tolist(),
        "initial_mean": initial.tolist(),
        "add_count": est.add_count,
        "reverted": est.reverted,
        "calls": calls,
        "mean_equals_initial": bool(est.mean.tobytes() == initial.tobytes()),
        "brute_force_mean": brute.tolist(),
        "accepted_data_mean_error": float(np.max(np.abs(est.mean - accepted))),
        "brute_force_mean_error": float(np.max(np.abs(est.mean - brute))),
        "covariance_symmetric": bool(np.allclose(est.covariance, est.covariance.T)),
    }
    outcome = {"deliveries": dict(sorted(codes.items())), "crashed": dep.proc.crashed}
    s = cfg.attack
    allowed = expected_code(cfg.policy, cfg.language, s.signal, s.siginfo, cfg.defense, fixtures)
    expected: dict = {}
    checks: dict = {}
    if allowed is not None:
        expected["cells"] = sorted(allowed)
        exact_all = (cfg.oracle.mode.value == "exact" and s.kind is StrategyKind.EVERY_WINDOW
                     and s.max_count is None)
        if allowed == {"H"}:
            if exact_all:
                expected["injections"] = cfg.calls
                expected["mean_equals_initial"] = True
                checks["injections"] = injector.log.count == cfg.calls
                checks["mean_equals_initial"] = workload["mean_equals_initial"]
            checks["reverted_equals_injections"] = est.reverted == injector.log.count
            if injector.log.count == 0:
                expected["brute_force_mean_error_max"] = 1e-12
                checks["mean_matches_brute_force"] = workload["brute_force_mean_error"] <= 1e-12
        elif allowed == {"C"}:
            expected["crashed"] = injector.log.count > 0
            checks["crashed"] = dep.proc.crashed == expected["crashed"]
        elif "C" not in allowed:
            expected["brute_force_mean_error_max"] = 1e-12
            checks["mean_matches_brute_force"] = workload["brute_force_mean_error"] <= 1e-12
        checks["deliveries"] = set(codes) <= set(allowed)
    return dict(workload=workload, outcome=outcome, injection_log=injector.log.to_dict(), expected=expected,
                checks=checks, filtered_count=dep.defenses.filtered_count, functionality_lost=False)


def _run_mlp(cfg: ScenarioConfig, fixtures) -> dict:
    data = load_or_synthesize(cfg.dataset)
    mcfg = MlpConfig(epochs=cfg.mlp_epochs, seed=cfg.seed)
    dep = Deployment.build(cfg)
    dep.install(8, "tanh_overflow_handler")
    # policies are pure, so one real delivery decides what every later injection does
    code, hit, trace = dep.deliver(InjectionEvent(cfg.attack.signal, cfg.attack.siginfo, dep.source, "main"))
    effect = {"H": InjectionEffect.FORCE_ACTIVATION, "C": InjectionEffect.CRASH}.get(code, InjectionEffect.NONE)
    filtered_probe = dep.defenses.filtered_count

    baseline = train_mlp(data, mcfg)
    injector = Injector(cfg.attack, cfg.oracle, SITES["mlp"], source=dep.source)
    attacked = train_mlp(data, mcfg, injector, effect)
    filtered = filtered_probe * attacked.injections if code == "F" else 0

    mode = "fast" if cfg.fast else "full"
    floor, drop = MLP_THRESHOLDS[mode]
    workload = {
        "accuracy": attacked.accuracy,
        "baseline_accuracy": baseline.accuracy,
        "injections": attacked.injections,
        "loop_iterations": attacked.loop_iterations,
        "forced_activations": attacked.forced,
        "epochs": mcfg.epochs,
        "train_size": mcfg.train_size,
        "test_size": len(data) - mcfg.train_size,
        "mlp": mcfg.to_dict(),
    }
    dataset = {"source": "synthetic" if data.synthetic else "file", "sha256": data.sha256,
               "samples": len(data), "surrogate": data.synthetic}
    outcome = {"delivery": code, "steps": list(trace.steps), "crashed": attacked.crashed}
    s = cfg.attack
    allowed = expected_code(cfg.policy, cfg.language, s.signal, s.siginfo, cfg.defense, fixtures)
    expected: dict = {"thresholds": {"mode": mode, "baseline_min": floor, "min_drop": drop,
                                     "injection_tolerance": INJECTION_COUNT_TOLERANCE}}
    checks = {"baseline_accuracy": baseline.accuracy is not None and baseline.accuracy >= floor}
    if allowed is not None:
        expected["cells"] = sorted(allowed)
        checks["delivery"] = code in allowed
        if allowed == {"H"}:
            checks["accuracy_drop"] = (attacked.accuracy is not None
                                       and attacked.accuracy <= baseline.accuracy - drop)
            if s.kind is StrategyKind.EVERY_WINDOW and s.max_count is None:
                it = attacked.loop_iterations
                checks["injection_count"] = abs(attacked.injections - it) <= INJECTION_COUNT_TOLERANCE * it
        elif allowed == {"C"}:
            checks["crashed"] = attacked.crashed
        elif "C" not in allowed:
            checks["accuracy_unchanged"] = attacked.accuracy == baseline.accuracy
    return dict(workload=workload, outcome=outcome, injection_log=injector.log.to_dict(), expected=expected,
                checks=checks, filtered_count=filtered, functionality_lost=False, dataset=dataset)


def _run_custom(cfg: ScenarioConfig, fixtures) -> dict:
    dep = Deployment.build(cfg)
    s = cfg.attack
    if dep.language.mode is SignalMode.EXPLICIT:
        if dep.language.can_register(s.signal):
            dep.install(s.signal, f"app:{s.signal.name}")
    else:
        dep.install_language_defaults()
    injector = Injector(replace(s, window=None) if s.window else s, cfg.oracle, source=dep.source)
    event = injector.fire(dep.main)
    code, hit, trace = dep.deliver(event)
    allowed = expected_code(cfg.policy, cfg.language, s.signal, s.siginfo, cfg.defense, fixtures)
    expected = {} if allowed is None else {"cells": sorted(allowed)}
    checks = {} if allowed is None else {"delivery": code in allowed}
    workload = {"handler": None if hit is None else str(hit[1]), "signal": s.signal.number}
    outcome = {"delivery": code, "steps": list(trace.steps), "crashed": dep.proc.crashed}
    return dict(workload=workload, outcome=outcome, injection_log=injector.log.to_dict(), expected=expected,
                checks=checks, filtered_count=dep.defenses.filtered_count, functionality_lost=False)


_RUNNERS = {
    ScenarioName.NGINX: _run_nginx,
    ScenarioName.NODEJS: _run_nodejs,
    ScenarioName.JSAT: _run_jsat,
    ScenarioName.MLP: _run_mlp,
    ScenarioName.CUSTOM: _run_custom,
}


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    now = (_dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch
           else _dt.datetime.now(_dt.timezone.utc))
    return now.replace(microsecond=0).isoformat()


def run_scenario(cfg: ScenarioConfig, fixtures=None) -> dict:
    """Run ``cfg`` end to end and return the report as a plain dict."""
    result = _RUNNERS[cfg.scenario](cfg, fixtures)
    checks = result.pop("checks")
    report = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "fixtures_sha256": _fixture_hashes(fixtures),
        **result,
        "checks": checks,
        "passed": _judge(checks),
        "generated_at": _timestamp(),
    }
    return report


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, enum.Enum):
        return obj.value
    return obj


def dumps_report(report: dict) -> str:
    return json.dumps(_jsonable(report), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def strip_volatile(report: dict) -> dict:
    return {k: v for k, v in report.items() if k not in VOLATILE_KEYS}
