"""One SIGUSR1 makes a Node.js enclave open its inspector port.

Node installs a SIGUSR1 handler at startup that starts the debugger. The
attacker sends the signal, connects, and reads the secret.
"""
from sgxsignal.scenarios import ScenarioConfig, run_scenario

for policy in ("Scone", "Gramine", "Occlum"):
    report = run_scenario(ScenarioConfig.from_dict({"scenario": "nodejs", "policy": policy,
                                                    "schedules": 200}))
    print(f"{policy:<8} delivery={report['outcome']['delivery']} leaked={report['workload']['leaked']} "
          f"injections={report['injection_log']['count']}")
