"""Poison a neural network's training with fake divide-by-zero signals.

Every time a hidden unit's activation loop runs, the attacker injects SIGFPE.
The training code's handler skips the iteration and clamps the activation to
1.0, which also zeroes its gradient. Pass a Banknote CSV path as the first
argument to use the real dataset instead of the synthetic stand-in.
"""
import sys

from sgxsignal.scenarios import ScenarioConfig, run_scenario

cfg = {"scenario": "mlp", "policy": "Gramine", "fast": "--full" not in sys.argv}
paths = [a for a in sys.argv[1:] if not a.startswith("--")]
if paths:
    cfg["dataset"] = paths[0]
report = run_scenario(ScenarioConfig.from_dict(cfg))
w = report["workload"]
print(f"dataset: {report['dataset']['source']}  epochs: {w['epochs']}")
print(f"clean accuracy:    {w['baseline_accuracy']:.4f}")
print(f"attacked accuracy: {w['accuracy']:.4f}")
print(f"injections: {w['injections']} over {w['loop_iterations']} loop iterations")

timer = dict(cfg, oracle={"mode": "timer_sampled", "timer_period": 5000})
w = run_scenario(ScenarioConfig.from_dict(timer))["workload"]
print(f"\nwith a coarse timer oracle: {w['injections']} injections, accuracy {w['accuracy']:.4f}")
