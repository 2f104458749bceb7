import random

import pytest
from hypothesis import given, settings, strategies as st

from mtfuzz.bench import load_fixture
from mtfuzz.interp import execute, mask_to_set
from mtfuzz.ir import StmtId
from mtfuzz.objective import rectify
from mtfuzz.solver import (NO_MUTABLE_BYTES, SolverConfig, SolverContext, SolveStatus,
                           descend, evaluate_joint, make_target, solve_constraint,
                           strategy_joint, strategy_plain, strategy_reachability,
                           strategy_satisfiability)

from conftest import pack3

BR1, BR2, BR5 = StmtId(1, 0), StmtId(1, 1), StmtId(1, 5)


def ctx_for(p, **cfg):
    return SolverContext.for_program(p, SolverConfig(**cfg))


# -- descend


def test_descend_linear_objective():
    calls = []

    def g(data):
        calls.append(data)
        return abs(data[0] - 42), True

    out = descend(g, {0}, b"\x00")
    assert out == b"\x2a"
    assert len(calls) < 40


def test_descend_returns_start_when_already_zero():
    calls = []

    def g(data):
        calls.append(data)
        return 0, True

    assert descend(g, {0}, b"\x07") == b"\x07"
    assert len(calls) == 1


def test_descend_exact_value_from_far_away():
    def g(data):
        b = data[0]
        return rectify(1 - b) + rectify(b - 1), True

    assert [b for b in range(256) if g(bytes([b]))[0] == 0] == [1]
    assert descend(g, {0}, bytes([200])) == b"\x01"


def test_descend_requires_mutable_bytes():
    with pytest.raises(ValueError):
        descend(lambda d: (1, True), set(), b"\x00")


def test_descend_unreached_start_restarts_then_gives_up():
    seen = []

    def g(data):
        seen.append(data)
        return 5, False

    assert descend(g, {0}, b"\x00", rng=random.Random(1), max_restarts=2) is None
    assert len(seen) == 3


def test_descend_carries_across_bytes():
    # 0x00ff -> 0x0100 is uphill for every single-byte move
    def g(data):
        return abs(int.from_bytes(data, "little") - 0x0100), True

    out = descend(g, {0, 1}, bytes([0xFF, 0x00]), max_restarts=0)
    assert out == bytes([0x00, 0x01])


@settings(max_examples=60, deadline=None)
@given(st.binary(min_size=4, max_size=4), st.sets(st.integers(0, 3), min_size=1),
       st.integers(0, 2**16))
def test_descend_touches_only_mutable_and_decreases(start, mutable, target):
    seen = []

    def g(data):
        seen.append(data)
        return abs(int.from_bytes(data, "little") - target), True

    hist = []
    descend(g, mutable, start, None, random.Random(0), 2, hist)
    for cand in seen:
        assert all(cand[i] == start[i] for i in range(4) if i not in mutable)
    for seg in hist:
        assert all(a > b for a, b in zip(seg, seg[1:]))


# -- strategies on the nested example


def test_pr_has_no_mutable_bytes(nested_foo):
    ctx = ctx_for(nested_foo)
    t = make_target(ctx, pack3(1, 1, 1111), BR5, True)
    out = strategy_reachability(t, ctx)
    assert (out.status, out.reason, out.executions) == (SolveStatus.UNSOLVED, NO_MUTABLE_BYTES, 0)


def test_pr_mutates_only_unshared_bytes(nested_foo):
    ctx = ctx_for(nested_foo)
    t = make_target(ctx, pack3(0, 9, 1111), BR2, True)
    assert sorted(mask_to_set(t.target_mask & ~t.mask(t.effective_positions()))) == [4, 5, 6, 7]
    out = strategy_reachability(t, ctx)
    assert out.solved
    x, y, z = [int.from_bytes(out.input[i:i + 4], "little") for i in (0, 4, 8)]
    assert x == 0 and y <= 2 and z == 1111


def test_ps_solves_worked_example(nested_foo):
    ctx = ctx_for(nested_foo)
    t = make_target(ctx, pack3(1, 1, 1111), BR5, True)
    out = strategy_satisfiability(t, ctx)
    assert out.solved and out.input == pack3(0, 2, 1111)
    assert out.executions <= 1000
    assert execute(nested_foo, out.input).takes(BR5, 0, True)


def test_ps_backtrack_fails_when_forward_picks_y3(nested_foo):
    ctx = ctx_for(nested_foo)
    t = make_target(ctx, pack3(1, 1, 1111), BR5, True)
    out = strategy_satisfiability(t, ctx, forward=pack3(1, 3, 1111))
    assert out.status is SolveStatus.UNSOLVED


def test_ps_forward_alone_without_priors(nested_foo):
    ctx = ctx_for(nested_foo)
    t = make_target(ctx, pack3(1, 1, 1111), BR1, False)
    assert t.effective_positions() == []
    out = strategy_satisfiability(t, ctx)
    assert out.solved
    assert [s for s, _ in ctx.descent_log] == ["ps"]


def test_joint_objective_values(nested_foo):
    ctx = ctx_for(nested_foo)
    t = make_target(ctx, pack3(1, 1, 1111), BR5, True)
    assert evaluate_joint(t, ctx, pack3(1, 3, 1111)).g_value == 2
    assert evaluate_joint(t, ctx, pack3(0, 2, 1111)).g_value == 0


def test_jo_descends_from_1_3(nested_foo):
    ctx = ctx_for(nested_foo)
    t = make_target(ctx, pack3(1, 1, 1111), BR5, True)
    out = strategy_joint(t, ctx, start=pack3(1, 3, 1111))
    assert out.solved and out.input == pack3(0, 2, 1111)
    assert ctx.descent_log[-1] == ("jo", [[2, 0]])


def test_jo_without_priors_is_plain(nested_foo):
    ctx = ctx_for(nested_foo)
    t = make_target(ctx, pack3(1, 1, 1111), BR1, False)
    a = strategy_joint(t, ctx)
    b = strategy_plain(t, ctx)
    assert a.solved and b.solved and a.input == b.input


def test_plain_fails_on_nested_target(nested_foo):
    ctx = ctx_for(nested_foo, max_execs=100_000)
    t = make_target(ctx, pack3(1, 1, 1111), BR5, True)
    out = strategy_plain(t, ctx)
    assert out.status is SolveStatus.UNSOLVED
    assert out.executions <= 100_000


# -- orchestration


def test_non_nested_target_uses_plain_only(nested_foo):
    ctx = ctx_for(nested_foo)
    out = solve_constraint(make_target(ctx, pack3(1, 1, 1111), BR1, False), ctx)
    assert out.solved and out.attempts == ["plain"] and out.strategy == "plain"


def test_nested_order_and_strategy(nested_foo):
    ctx = ctx_for(nested_foo)
    out = solve_constraint(make_target(ctx, pack3(1, 1, 1111), BR5, True), ctx)
    assert out.attempts == ["plain", "pr", "ps"] and out.strategy == "ps"
    assert [s for s, _ in out.timings] == out.attempts


def test_crc_gate_needs_ps():
    spec = load_fixture("crc_gate")
    p = spec.program()
    ctx = ctx_for(p)
    t = make_target(ctx, spec.seeds[0], p.stmt_id("1:3"), False)
    out = solve_constraint(t, ctx)
    assert out.solved and out.strategy == "ps"
    assert out.input[0] == 1
    assert execute(p, out.input).status.value == "aborted"


def test_disabled_strategies_are_skipped(nested_foo):
    ctx = ctx_for(nested_foo, enable_pr=False, enable_ps=False)
    out = solve_constraint(make_target(ctx, pack3(1, 1, 1111), BR5, True), ctx)
    assert out.attempts == ["plain", "jo"]
    assert out.solved


def test_unsat_target_exhausts():
    spec = load_fixture("unsat_alpha")
    p = spec.program()
    ctx = ctx_for(p, budget_plain=0.2, budget_pr=0.2, budget_ps=0.3, budget_jo=0.3)
    t = make_target(ctx, spec.seeds[0], p.stmt_id("2:1"), True)
    out = solve_constraint(t, ctx)
    assert out.status is SolveStatus.UNSOLVED
    assert [a for i, a in enumerate(out.attempts) if a not in out.attempts[:i]] == \
        ["plain", "pr", "ps", "jo"]


def test_implicit_retry_on_hidden_guard_fixture():
    spec = load_fixture("implicit_k")
    p = spec.program()
    ctx = ctx_for(p)
    t = make_target(ctx, spec.seeds[0], p.stmt_id("2:6"), True)
    assert t.effective_positions() == []
    out = solve_constraint(t, ctx)
    assert out.solved
    assert sorted(str(t.entry(i).stmt) for i in t.implicit) == ["1:1", "2:2"]
    assert ctx.implicit_detections >= 1
    assert out.attempts.count("ps") == 2


def test_target_must_need_a_flip(nested_foo):
    ctx = ctx_for(nested_foo)
    with pytest.raises(ValueError):
        make_target(ctx, pack3(1, 1, 1111), BR1, True)
    with pytest.raises(ValueError):
        make_target(ctx, pack3(5, 1, 1111), BR5, True)


def test_budget_caps_executions(nested_foo):
    ctx = ctx_for(nested_foo, max_execs=10, max_restarts=100)
    t = make_target(ctx, pack3(1, 1, 1111), BR5, True)
    out = strategy_plain(t, ctx)
    assert out.executions <= 11
