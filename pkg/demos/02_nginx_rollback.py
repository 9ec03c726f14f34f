"""Roll a web server back to an old, insecure configuration.

The admin upgrades the sealed config and binary to v2. The attacker had
copied the v1 blobs earlier; it writes them back and sends SIGHUP and
SIGUSR1 so the server's own reload handlers pick them up.
"""
from sgxsignal.scenarios import ScenarioConfig, run_scenario

for defense in ("none", "ledger", "whitelist:15"):
    report = run_scenario(ScenarioConfig.from_dict({"scenario": "nginx", "policy": "Scone",
                                                    "defense": defense}))
    w = report["workload"]
    print(f"defense={defense:<13} config={w['config_version']} binary={w['binary_version']} "
          f"auth={'on' if w['auth_enabled'] else 'off'} filtered={report['filtered_count']} "
          f"admin_signals_lost={report['functionality_lost']}")
