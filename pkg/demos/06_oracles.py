"""Cross-checks against brute force and definition-level oracles."""

import random

from mtfuzz import execute, parse_target
from mtfuzz.bench import (brute_force_solve, gen_random_target, load_fixture, oracle_priors,
                          random_input)
from mtfuzz.cfa import PriorFinder

p = load_fixture("unsat_alpha").program()
print("unsat_alpha 2:1 witness over all 2-byte inputs:",
      brute_force_solve(p, p.stmt_id("2:1"), True, 2))

agree = total = 0
for seed in range(50):
    p = parse_target(gen_random_target(seed))
    data = random_input(random.Random(seed), 8)
    r = execute(p, data)
    pf = PriorFinder(p, r)
    for pos in range(len(r.trace)):
        total += 1
        agree += set(pf.find(pos).positions) >= set(oracle_priors(p, r, pos, data))
print(f"computed priors cover the oracle on {agree}/{total} random targets")
