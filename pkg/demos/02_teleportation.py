"""Running the teleportation protocol in the state-vector calculus.

Alice entangles and measures her two qubits; the two-bit result picks the
channel she signals on, and Bob's matching receiver applies the correcting
gate.  The run below scripts each measurement branch in turn and shows
that success is reached on all four.
"""

from qproc import cqp, protocols

source = cqp.parse_cqp(protocols.read("teleport.cqp"))
print("source:", cqp.format_config(source))
print()

print("one-step listing from the start:")
for step in cqp.enumerate_steps(source):
    print(" ", step.label())
print()

for branch in range(4):
    result = cqp.run(source, script=[branch], max_steps=32)
    final = result.final
    gates = [s.gate for s in result.steps if s.rule == "R-Trans"]
    print(
        f"branch {branch}: correction {gates[-1]}, "
        f"final {','.join(final.sigma.qubit_names)} = {cqp.format_amps(final.sigma)}, "
        f"success = {cqp.has_success_barb(final)}"
    )

print()
print("full trace of branch 0:")
result = cqp.run(source, script=[0], max_steps=32)
for i, step in enumerate(result.steps):
    print(f" {i + 1:2d}. {step.label()}")
