"""Each solving strategy on the same nested target."""

import struct

from mtfuzz import (SolverConfig, SolverContext, load_fixture, make_target, strategy_joint,
                    strategy_plain, strategy_reachability, strategy_satisfiability)

p = load_fixture("nested_foo").program()
seed = struct.pack("<III", 1, 1, 1111)
for fn in (strategy_plain, strategy_reachability, strategy_satisfiability, strategy_joint):
    ctx = SolverContext.for_program(p, SolverConfig(max_execs=20_000))
    t = make_target(ctx, seed, p.stmt_id("1:5"), True)
    out = fn(t, ctx)
    found = struct.unpack("<III", out.input) if out.solved else None
    print(f"{fn.__name__:26s} {out.status.value:9s} {out.executions:6d} execs  "
          f"{out.reason or ''} {found or ''}")
