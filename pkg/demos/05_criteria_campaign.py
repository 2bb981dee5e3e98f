"""Corroborating the encodability criteria on random configurations.

Each generated configuration is explored together with its translation,
and every per-instance criterion is checked: operational completeness and
soundness, name and qubit invariance, register-size preservation,
congruence preservation, success agreement and divergence reflection.
The universal statements are corroborated, never proved.
"""

import time
from collections import Counter

from qproc import cqp, criteria

SEEDS = 100
budget = criteria.Budget(48, 800)

print(f"running all criteria on {SEEDS} generated configurations ...")
started = time.time()
tally = Counter()
fails = []
for seed in range(SEEDS):
    source = criteria.gen_config(seed, size=4, depth=6)
    for name, verdict in criteria.run_instance_checks(source, budget, seed).items():
        tally[verdict.status] += 1
        if verdict.fails:
            fails.append((seed, name))
elapsed = time.time() - started

print(f"done in {elapsed:.1f}s: {dict(tally)}")
if fails:
    for seed, name in fails:
        print(f"  FAIL {name} on seed {seed}: {cqp.format_term(criteria.gen_config(seed).term)}")
else:
    print("no counterexample found; the properties are corroborated on this sample")

print("\na taste of the generator:")
for seed in range(3):
    config = criteria.gen_config(seed)
    print(f"  seed {seed}: {cqp.format_term(config.term)}")
