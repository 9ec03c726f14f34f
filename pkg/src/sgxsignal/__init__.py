"""Simulate how SGX runtimes and language runtimes react to injected signals."""
from .signals import (
    SIGNALS,
    DeliveryOutcome,
    OriginCode,
    OutcomeKind,
    SigInfo,
    SignalSpec,
    signal_by_name,
    signal_by_number,
)
from .enclave import EnclaveProcess, EnclaveThread
from .policies import InjectionEvent, InjectionSource, PolicyId, deliver, get_policy
from .defenses import DefenseConfig, Defenses

__version__ = "0.1.0"

__all__ = [
    "SIGNALS",
    "DeliveryOutcome",
    "OriginCode",
    "OutcomeKind",
    "SigInfo",
    "SignalSpec",
    "signal_by_name",
    "signal_by_number",
    "EnclaveProcess",
    "EnclaveThread",
    "InjectionEvent",
    "InjectionSource",
    "PolicyId",
    "deliver",
    "get_policy",
    "DefenseConfig",
    "Defenses",
]
