"""Prior and effective prior statements of the innermost branch."""

import struct

from mtfuzz import SolverConfig, SolverContext, load_fixture, make_target

p = load_fixture("nested_foo").program()
ctx = SolverContext.for_program(p, SolverConfig())
t = make_target(ctx, struct.pack("<III", 1, 1, 1111), p.stmt_id("1:5"), True)

print("target bytes   ", sorted(t.result.trace[t.position].taint))
print("prior stmts    ", [str(s) for s in t.priors.stmts(t.result)])
print("effective      ", [str(t.entry(i).stmt) for i in t.effective.positions])
for i in t.priors.positions:
    e = t.entry(i)
    print(f"  {e.stmt} bytes {sorted(e.taint)}")
