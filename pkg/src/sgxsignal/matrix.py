"""Regenerate the runtime and language grids by simulation."""
from __future__ import annotations

from typing import Iterable, Optional

from .enclave import KERNEL_RESERVED, ReservedByRuntime
from .languages import LANGUAGE_ORDER, get_language
from .policies import (
    VULNERABLE_POLICIES,
    InjectionEvent,
    InjectionSource,
    MultiProcessPolicy,
    get_policy,
)
from .signals import OriginCode, SigInfo, as_signal
from .tables import Grid

__all__ = [
    "policy_cell",
    "language_cell",
    "default_handler_cell",
    "runtime_grid",
    "language_grid",
    "default_handler_grid",
]


def policy_cell(policy, signal) -> str:
    """Deliver ``signal`` to a fresh enclave that registered a handler for it."""
    pol = get_policy(policy)
    s = as_signal(signal)
    co_resident = isinstance(pol, MultiProcessPolicy)
    proc = pol.new_process(co_resident=co_resident)
    if s.number not in KERNEL_RESERVED:
        try:
            pol.install_app_handler(proc.main, s, f"app:{s.name}")
        except ReservedByRuntime:
            pass
    source = InjectionSource.CORESIDENT_ENCLAVE_PROCESS if co_resident else InjectionSource.OS_KILL
    return pol.deliver(InjectionEvent.make(s, source), proc).cell


def language_cell(lang, signal) -> str:
    """Send ``signal`` to a plain process written in ``lang`` (no enclave).

    SIGFPE carries a crafted integer-divide fault code, as an attacker's
    kernel module would supply.
    """
    model = get_language(lang)
    s = as_signal(signal)
    origin = OriginCode.FPE_INTDIV if s.number == 8 else OriginCode.USER_KILL
    return model.translate(s, SigInfo(s, origin, "attacker")).cell


def default_handler_cell(lang, signal) -> str:
    return "1" if get_language(lang).default_handler_effect(signal) is not None else "0"


def runtime_grid(policies: Optional[Iterable] = None, signals=range(1, 32)) -> Grid:
    policies = list(policies) if policies else list(VULNERABLE_POLICIES)
    rows = {}
    for pid in policies:
        pol = get_policy(pid)
        cells = ["."] * 31
        for n in signals:
            cells[n - 1] = policy_cell(pol, n)
        rows[pol.id.value] = "".join(cells)
    return Grid(rows)


def language_grid(signals=range(1, 32)) -> Grid:
    return _lang_grid(language_cell, signals)


def default_handler_grid(signals=range(1, 32)) -> Grid:
    return _lang_grid(default_handler_cell, signals)


def _lang_grid(fn, signals) -> Grid:
    rows = {}
    for lid in LANGUAGE_ORDER:
        cells = ["."] * 31
        for n in signals:
            cells[n - 1] = fn(lid, n)
        rows[lid.value] = "".join(cells)
    return Grid(rows)
