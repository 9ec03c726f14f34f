"""Which signals can an untrusted OS push into each enclave runtime?

Prints the simulated runtime grid next to the measured one, then traces a
single SIGFPE through two runtimes to show where the decision is made.
"""
from sgxsignal.matrix import runtime_grid
from sgxsignal.policies import InjectionEvent, get_policy
from sgxsignal.tables import load_grid

measured = load_grid("table2")
simulated = runtime_grid()
print(simulated.render())
print(f"\ncells differing from the measurement: {len(measured.diff(simulated))}\n")

for runtime in ("IntelSdkV1", "IntelSdkV2", "Gramine"):
    policy = get_policy(runtime)
    proc = policy.new_process()
    policy.install_app_handler(proc.main, 8, "on_divide_error")
    trace = policy.deliver(InjectionEvent.make(8), proc)
    print(f"{runtime:<11} kill(SIGFPE) -> {trace.kind.value:<18} via {' > '.join(trace.steps)}")
