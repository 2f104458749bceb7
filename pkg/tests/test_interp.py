import pytest
from hypothesis import given, settings, strategies as st

from mtfuzz.bench import gen_random_target
from mtfuzz.interp import (ForcePlan, NotExecutable, Status, execute, mask_to_set,
                           replay_with_choices, set_to_mask, wrap64)
from mtfuzz.ir import StmtId, parse_target

from conftest import pack3, prog


def value_of(expr, data=b"\x00" * 8):
    """Evaluate ``expr`` by branching on it and reading the recorded operand."""
    r = execute(prog(f"fn main() {{ if {expr} == 0 {{ }} }}"), data)
    return r.trace[0].lhs_value, r.trace[0].lhs_taint


def test_wrap64():
    assert wrap64(2**63) == -(2**63)
    assert wrap64(-1) == -1
    assert wrap64(2**64 + 5) == 5


def test_mask_round_trip():
    assert mask_to_set(set_to_mask({0, 3, 9})) == {0, 3, 9}
    assert set_to_mask(()) == 0


@pytest.mark.parametrize("expr,expected", [
    ("-7 / 2", -3), ("-7 % 2", -1), ("7 / -2", -3), ("7 % -2", 1),
    ("1 << (in(0, 1) + 65)", 2), ("-16 >> 2", -4), ("3 + 4 * 2", 11), ("(3 + 4) * 2", 14),
    ("6 & 3 | 8", 10), ("5 ^ 1", 4), ("1 + 2 << 1", 6),
    ("9223372036854775807 + 1", -(2**63)),
])
def test_arithmetic(expr, expected):
    assert value_of(expr)[0] == expected


def test_little_endian_reads_and_taint():
    data = bytes([1, 2, 3, 4, 5, 6, 7, 0x80])
    assert value_of("in(0, 2)", data) == (0x0201, {0, 1})
    v, taint = value_of("in(4, 4)", data)
    assert v == 0x80070605 and taint == {4, 5, 6, 7}
    v, _ = value_of("in(0, 8)", data)
    assert v == wrap64(int.from_bytes(data, "little"))


def test_taint_unions_through_arithmetic():
    _, taint = value_of("in(0, 1) * 3 + in(5, 1) - 7", bytes(8))
    assert taint == {0, 5}


def test_nested_foo_trace(nested_foo):
    r = execute(nested_foo, pack3(1, 1, 1111))
    got = [(str(e.stmt), e.branch_taken, e.lhs_value, e.rhs_value) for e in r.trace]
    assert got == [("1:0", True, 1, 2), ("1:1", True, 2, 3), ("1:2", True, 1111, 1111),
                   ("1:3", False, 1, 2222), ("1:5", False, 1, 1)]
    assert r.status is Status.NORMAL
    assert [sorted(e.taint) for e in r.trace][:2] == [[0, 1, 2, 3], list(range(8))]
    assert r.edges == {(e.stmt, e.branch_taken) for e in r.trace}


def test_explicit_flow_only(implicit_k):
    z = 100000
    r = execute(implicit_k, pack3(z - 12345, z - 56789, z))
    k_check = r.trace[r.find(StmtId(2, 5))]
    assert k_check.branch_taken and k_check.taint == frozenset()


def test_abort_exit_and_statuses():
    p = prog('fn main() { if in(0, 1) == 1 { abort "boom"; } if in(0, 1) == 2 { exit; } }')
    r = execute(p, b"\x01")
    assert (r.status, r.detail) == (Status.ABORTED, "boom")
    assert execute(p, b"\x02").status is Status.EXITED
    assert execute(p, b"\x03").status is Status.NORMAL


@pytest.mark.parametrize("src,data,detail", [
    ("fn main() { let a = in(4, 1); }", b"\x00", "InputTooShort"),
    ("fn main() { let a = 1 / in(0, 1); }", b"\x00", "DivByZero"),
    ("fn main() { icall in(0, 1) [f](); }\nfn f() {}", b"\x05", "BadSelector"),
    ("fn main() { call main(); }", b"", "StackOverflow"),
])
def test_runtime_errors(src, data, detail):
    r = execute(prog(src), data)
    assert (r.status, r.detail) == (Status.RUNTIME_ERROR, detail)


def test_step_limit():
    p = prog("fn main() { let i = 0; while i < 10 { i = i + 0; } }")
    r = execute(p, b"", limit=1000)
    assert r.status is Status.LIMIT_EXCEEDED
    with pytest.raises(ValueError):
        execute(p, b"", limit=0)


def test_not_executable():
    with pytest.raises(NotExecutable):
        execute(prog("fn main() { let a = in(0, 3); }"), b"\x00" * 4)


def test_calls_return_values_and_frames():
    p = prog("""
        fn main() { let a = twice(in(0, 1)); if a == 8 { } }
        fn twice(x) { if x > 100 { return 0; } return x + x; }""")
    r = execute(p, b"\x04")
    top = r.trace[-1]
    assert (top.lhs_value, top.branch_taken, sorted(top.taint)) == (8, True, [0])
    assert [f.function for f in r.frames] == ["main", "twice"]
    assert r.frames[1].parent == 0 and r.frames[1].call_site[0] == "main"
    assert r.ancestors(1) == {0: 1}


def test_loops_count_occurrences():
    p = prog("fn main() { let i = 0; while i < in(0, 1) { i = i + 1; } }")
    r = execute(p, b"\x03")
    assert [e.occurrence for e in r.trace] == [0, 1, 2, 3]
    assert [e.branch_taken for e in r.trace] == [True, True, True, False]


def test_forced_branch_keeps_natural_outcome(nested_foo):
    sid = StmtId(1, 0)
    r = execute(nested_foo, pack3(1, 1, 1111), ForcePlan.listed({(sid, 0): False}))
    e = r.trace[0]
    assert (e.natural, e.branch_taken, e.forced, e.diverged) == (True, False, True, True)
    assert len(r.trace) == 1 and r.forced


def test_forced_run_reaches_untaken_region(nested_foo):
    plan = ForcePlan.listed({(StmtId(1, 0), 0): True, (StmtId(1, 1), 0): True})
    r = execute(nested_foo, pack3(1, 3, 1111), plan)
    assert r.find(StmtId(1, 5)) is not None
    assert r.trace[1].natural is False


def test_listed_plan_rejects_negative_occurrence():
    with pytest.raises(ValueError):
        ForcePlan.listed({(StmtId(0, 0), -1): True})


def test_replay_of_own_choices_is_identity(crc_gate):
    data = bytes([5, 1, 2, 3, 11])
    r = execute(crc_gate, data)
    again = replay_with_choices(crc_gate, data, r.choices())
    assert again.choices() == r.choices()
    assert not any(e.diverged for e in again.trace)


def test_replay_marks_divergence(crc_gate):
    r = execute(crc_gate, bytes([5, 1, 2, 3, 11]))
    again = replay_with_choices(crc_gate, bytes([5, 1, 2, 3, 12]), r.choices())
    assert again.trace[0].diverged and not again.trace[1].diverged


def test_replay_stops_forcing_when_order_departs():
    p = prog("fn main() { if in(0, 1) == 1 { if in(1, 1) == 1 { } } if in(2, 1) == 1 { } }")
    r = execute(p, b"\x01\x01\x01")
    rec = [(r.trace[0].stmt, False), (r.trace[1].stmt, True)]
    again = execute(p, b"\x01\x01\x01", ForcePlan.replay(rec))
    # after the first forced branch the next statement differs from the record
    assert [e.forced for e in again.trace] == [True, False]


def test_takes_and_find(nested_foo):
    r = execute(nested_foo, pack3(1, 1, 1111))
    assert r.takes(StmtId(1, 0), 0, True)
    assert not r.takes(StmtId(1, 5), 0, True)
    assert r.find(StmtId(1, 5), 1) is None


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 5000), st.binary(min_size=8, max_size=8))
def test_execution_is_deterministic(seed, data):
    p = parse_target(gen_random_target(seed))
    a, b = execute(p, data), execute(p, data)
    assert a.trace == b.trace and a.status == b.status and a.edges == b.edges


def test_dump_mentions_every_entry(nested_foo):
    text = execute(nested_foo, pack3(1, 1, 1111)).dump()
    assert text.splitlines()[0] == "status=normal"
    assert len(text.splitlines()) == 6
