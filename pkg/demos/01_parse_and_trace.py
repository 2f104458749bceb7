"""Parse a target, run it on one input and print the recorded trace."""

import struct

from mtfuzz import execute, format_program, load_fixture

spec = load_fixture("nested_foo")
p = spec.program()
print(format_program(p))

data = struct.pack("<III", 1, 1, 1111)
r = execute(p, data)
print(r.dump())
for e in r.trace:
    print(f"{e.stmt}  {e.lhs_value} {e.cmp} {e.rhs_value} -> {e.branch_taken}  "
          f"bytes {sorted(e.taint)}")
