"""Guards that steer the target only through implicit flows."""

import struct

from mtfuzz import (SolverConfig, SolverContext, detect_implicit_priors, load_fixture,
                    make_target, solve_constraint)

p = load_fixture("implicit_k").program()
z = 100000
seed = struct.pack("<III", z - 12345, z - 56789, z)
ctx = SolverContext.for_program(p, SolverConfig(), implicit_log=print)
t = make_target(ctx, seed, p.stmt_id("2:6"), True)
print("explicit effective priors:", t.effective_positions())

rep = detect_implicit_priors(p, seed, struct.pack("<III", z - 12345, z - 56789, z + 1), t,
                             log=print)
print("confirmed:", [str(t.entry(i).stmt) for i in rep.confirmed],
      f"({rep.executions} executions)")

out = solve_constraint(t, ctx)
print(out.status.value, "by", out.strategy, "after", " -> ".join(out.attempts))
