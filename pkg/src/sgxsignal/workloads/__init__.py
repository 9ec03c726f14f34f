"""Instrumented victim programs."""
from . import banknote, config_server, debug_server, estimator, mlp

#: instrumentation points each workload exposes to the window oracle
SITES = {
    "nginx": config_server.SITES,
    "nodejs": debug_server.SITES,
    "jsat": estimator.SITES,
    "mlp": mlp.SITES,
    "custom": ("main",),
}

__all__ = ["banknote", "config_server", "debug_server", "estimator", "mlp", "SITES"]
