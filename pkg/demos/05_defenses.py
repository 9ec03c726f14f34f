"""Exit information separates real faults from injected ones; a ledger covers the rest.

A genuine divide error leaves a valid exit record in the thread's save
area. An injected SIGFPE does not. Signals that never come from hardware
need the ledger instead: the sending thread writes (signal, target) before
leaving the enclave and the receiver consumes the entry.
"""
from sgxsignal.defenses import DefenseConfig, Defenses
from sgxsignal.policies import InjectionEvent, InjectionSource, get_policy

policy = get_policy("Scone")
proc = policy.new_process(tids=("worker", "helper"))
for t in proc.threads:
    policy.install_app_handler(t, 8, "on_fpe")
    policy.install_app_handler(t, 10, "on_usr1")
defenses = Defenses(DefenseConfig.parse("exit-info+ledger"))

def show(label, event):
    trace = policy.deliver(event, proc, defenses)
    checks = [s for s in trace.steps if ":" in s]
    print(f"{label:<32} {trace.kind.value:<18} {checks}")

show("genuine divide error", InjectionEvent.make(8, InjectionSource.GENUINE_HW_EXCEPTION))
show("injected SIGFPE", InjectionEvent.make(8))
show("injected SIGUSR1", InjectionEvent.make(10, target="helper"))
defenses.ledger_record(proc, proc.thread("worker"), 10, "helper")
show("SIGUSR1 announced by worker", InjectionEvent.make(10, InjectionSource.ENCLAVE_THREAD_OCALL, target="helper"))
show("same SIGUSR1 replayed", InjectionEvent.make(10, target="helper"))
print(f"filtered: {defenses.filtered_count}")
