"""Gradient-descent input mutation and the nested-constraint strategies.

For a target branch the solver first tries a plain descent over the bytes
flowing into the target.  If the target is nested it then tries, in order:

* ``pr``: mutate only target bytes that feed no effective prior;
* ``ps``: a forward descent with effective priors held by force, then a
  backtrack that repairs each prior with the bytes not yet claimed;
* ``jo``: one descent on the sum of rectified constraints of the target and
  all effective priors, with the priors held by force.
"""

from __future__ import annotations

import enum
import logging
import math
import random
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional

from .cfa import PriorFinder, PriorSet, build_analyses
from .implicit import PreconditionViolated, detect_implicit_priors
from .interp import DEFAULT_STEP_LIMIT, ExecutionResult, ForcePlan, execute, mask_to_set
from .ir import Program, StmtId
from .objective import JointObjective, ObjectiveTerm, rectify, transform_predicate
from .taint_group import EffectiveSet, UnionFind, effective_priors

log = logging.getLogger(__name__)

INF = math.inf
STRATEGIES = ("plain", "pr", "ps", "jo")


@dataclass
class SolverConfig:
    budget_plain: float = 2.0
    budget_pr: float = 2.0
    budget_ps: float = 10.0
    budget_jo: float = 20.0
    enable_pr: bool = True
    enable_ps: bool = True
    enable_jo: bool = True
    max_restarts: int = 3
    max_execs: Optional[int] = None  # per strategy, on top of the time budget
    step_limit: int = DEFAULT_STEP_LIMIT

    def budget_for(self, strategy: str) -> float:
        return getattr(self, f"budget_{strategy}")


class Executor:
    """Counts executions and reports every unforced run to ``on_unforced``."""

    def __init__(self, program: Program, step_limit: int = DEFAULT_STEP_LIMIT,
                 on_unforced: Optional[Callable] = None):
        self.program = program
        self.step_limit = step_limit
        self.on_unforced = on_unforced
        self.count = 0

    def run(self, data: bytes, plan: Optional[ForcePlan] = None) -> ExecutionResult:
        self.count += 1
        r = execute(self.program, data, plan, self.step_limit)
        if plan is None and self.on_unforced is not None:
            self.on_unforced(bytes(data), r)
        return r


class Budget:
    def __init__(self, executor: Executor, seconds: Optional[float] = None,
                 max_execs: Optional[int] = None, deadline: Optional[float] = None):
        self.executor = executor
        self.start = executor.count
        self.max_execs = max_execs
        d = time.monotonic() + seconds if seconds is not None else None
        if deadline is not None:
            d = deadline if d is None else min(d, deadline)
        self.deadline = d

    @property
    def used(self) -> int:
        return self.executor.count - self.start

    def exhausted(self) -> bool:
        if self.max_execs is not None and self.used >= self.max_execs:
            return True
        return self.deadline is not None and time.monotonic() >= self.deadline


class Unlimited:
    def exhausted(self) -> bool:
        return False


# --------------------------------------------------------------------------
# gradient descent


def _score(evaluate, x) -> float:
    g, reached = evaluate(bytes(x))
    return g if reached else INF


def _line_search(evaluate, x: bytearray, g, direction: dict, budget):
    best, best_g = None, g
    step, prev = 1, None
    while not budget.exhausted():
        y = bytearray(x)
        for i, d in direction.items():
            y[i] = min(255, max(0, int(math.floor(x[i] + step * d + 0.5))))
        if y == prev or y == x:
            break
        gy = _score(evaluate, y)
        if gy < best_g:
            best, best_g = y, gy
            if gy == 0:
                break
        else:
            break
        prev = y
        step *= 2
    return best, best_g


def _descent_step(evaluate, x: bytearray, g, mutable: list, budget):
    if g == INF:
        return None
    slopes = {}
    for i in mutable:
        base = x[i]
        for d in (1, -1):
            v = base + d
            if not 0 <= v <= 255:
                continue
            if budget.exhausted():
                return None
            x[i] = v
            gy = _score(evaluate, x)
            x[i] = base
            if gy == 0:
                y = bytearray(x)
                y[i] = v
                return y, 0
            if gy < g and g - gy > slopes.get(i, (0, 0))[0]:
                slopes[i] = (g - gy, d)
    if not slopes:
        return _carry_step(evaluate, x, g, mutable, budget)
    top = max(s for s, _ in slopes.values())
    direction = {i: d * s / top for i, (s, d) in slopes.items()}
    best, best_g = _line_search(evaluate, x, g, direction, budget)
    if best_g != 0 and len(direction) > 1:
        # steepest single coordinate, in case the joint step overshoots
        i = max(slopes, key=lambda k: slopes[k][0])
        y, gy = _line_search(evaluate, x, g, {i: slopes[i][1]}, budget)
        if y is not None and gy < best_g:
            best, best_g = y, gy
    if best is None:
        return None
    return best, best_g


def _runs(mutable: list) -> list:
    """Contiguous runs of mutable offsets, split into pieces of at most 8 bytes."""
    runs, cur = [], []
    for i in mutable:
        if cur and (i != cur[-1] + 1 or len(cur) == 8):
            runs.append(cur)
            cur = []
        cur.append(i)
    if cur:
        runs.append(cur)
    return [r for r in runs if len(r) > 1]


def _carry_step(evaluate, x: bytearray, g, mutable: list, budget):
    """Plateau escape: +/-1 on a run of bytes read as a little-endian integer.

    Byte-wise probes cannot carry, so e.g. 0x00ff -> 0x0100 looks uphill.
    The step doubles while g keeps falling.
    """
    best, best_g = None, g
    for run in _runs(mutable):
        width = len(run)
        top = (1 << (8 * width)) - 1
        v0 = int.from_bytes(bytes(x[i] for i in run), "little")
        for d in (1, -1):
            step, last = 1, None
            while not budget.exhausted():
                v = min(top, max(0, v0 + d * step))
                if v == v0 or v == last:
                    break
                y = bytearray(x)
                y[run[0]:run[-1] + 1] = v.to_bytes(width, "little")
                gy = _score(evaluate, y)
                if gy >= best_g:
                    break
                best, best_g, last = y, gy, v
                if gy == 0:
                    return best, 0
                step *= 2
    if best is None:
        return None
    return best, best_g


def descend(evaluate: Callable, mutable, start: bytes, budget=None,
            rng: Optional[random.Random] = None, max_restarts: int = 3,
            history: Optional[list] = None) -> Optional[bytes]:
    """Minimise ``evaluate`` over the ``mutable`` byte offsets of ``start``.

    ``evaluate(data) -> (g, reached)``; unreached candidates count as
    failed steps.  Each iteration estimates per-byte slopes with +/-1 probes
    (saturating at 0 and 255) and line-searches with a doubling step along
    the normalised negative gradient.  A step is taken only if g strictly
    decreases.  When no single-byte probe improves, contiguous mutable bytes
    are also probed as little-endian integers so that carries are possible.
    On a remaining plateau, mutable bytes are re-randomised up to
    ``max_restarts`` times.  Returns the first input with g == 0, else None.
    ``history`` receives one list of accepted g values per restart segment.
    """
    mutable = sorted(set(mutable))
    if not mutable:
        raise ValueError("no mutable bytes")
    budget = budget or Unlimited()
    rng = rng or random.Random(0)
    x = bytearray(start)
    g = _score(evaluate, x)
    seg = [g]
    if history is not None:
        history.append(seg)
    restarts = 0
    while True:
        if g == 0:
            return bytes(x)
        if budget.exhausted():
            return None
        step = _descent_step(evaluate, x, g, mutable, budget)
        if step is not None:
            x, g = step
            seg.append(g)
            continue
        if restarts >= max_restarts or budget.exhausted():
            return None
        restarts += 1
        for i in mutable:
            x[i] = rng.randrange(256)
        g = _score(evaluate, x)
        seg = [g]
        if history is not None:
            history.append(seg)


# --------------------------------------------------------------------------
# targets and outcomes


class SolveStatus(enum.Enum):
    SOLVED = "solved"
    UNSOLVED = "unsolved"
    VANISHED = "target-vanished"


NO_MUTABLE_BYTES = "NoMutableBytes"
BUDGET_EXHAUSTED = "BudgetExhausted"
VERIFICATION_FAILED = "VerificationFailed"
TARGET_UNREACHABLE = "TargetUnreachableDuringEval"


@dataclass
class SolveOutcome:
    status: SolveStatus
    input: Optional[bytes] = None
    reason: Optional[str] = None
    executions: int = 0
    strategy: Optional[str] = None
    attempts: list = field(default_factory=list)
    unreached_input: Optional[bytes] = None
    timings: list = field(default_factory=list)  # (strategy, seconds) per attempt

    @property
    def solved(self) -> bool:
        return self.status is SolveStatus.SOLVED


@dataclass
class ConstraintTarget:
    stmt: StmtId
    occurrence: int
    desired: bool
    input: bytes
    result: Optional[ExecutionResult] = None
    position: Optional[int] = None
    priors: Optional[PriorSet] = None
    effective: Optional[EffectiveSet] = None
    implicit: list = field(default_factory=list)
    attempts: Counter = field(default_factory=Counter)
    discovered: int = 0
    parent: Optional[int] = None

    @property
    def edge(self) -> tuple:
        return (self.stmt, self.desired)

    @property
    def total_attempts(self) -> int:
        return self.attempts["solve"]

    def effective_positions(self) -> list:
        eff = set(self.effective.positions if self.effective is not None else ())
        return sorted(eff | set(self.implicit), reverse=True)

    def entry(self, pos: int):
        return self.result.trace[pos]

    def mask(self, positions) -> int:
        m = 0
        for p in positions:
            m |= self.result.trace[p].mask
        return m

    @property
    def target_mask(self) -> int:
        return self.result.trace[self.position].mask

    def plan(self, positions) -> Optional[ForcePlan]:
        if not positions:
            return None
        tr = self.result.trace
        return ForcePlan.listed({(tr[p].stmt, tr[p].occurrence): tr[p].branch_taken
                                 for p in positions})


@dataclass
class SolverContext:
    program: Program
    executor: Executor
    config: SolverConfig = field(default_factory=SolverConfig)
    analyses: Optional[dict] = None
    rng: random.Random = field(default_factory=lambda: random.Random(0))
    deadline: Optional[float] = None
    prior_cache: Optional[dict] = None
    observer: Optional[Callable] = None  # (strategy, start, mutable_mask, candidate)
    descent_log: list = field(default_factory=list)  # (strategy, segments)
    events: list = field(default_factory=list)
    implicit_log: Optional[Callable[[str], None]] = None
    implicit_detections: int = 0

    def __post_init__(self):
        if self.analyses is None:
            self.analyses = build_analyses(self.program)

    @classmethod
    def for_program(cls, program: Program, config: Optional[SolverConfig] = None,
                    seed: int = 0, **kw) -> "SolverContext":
        config = config or SolverConfig()
        ex = Executor(program, config.step_limit)
        return cls(program, ex, config, rng=random.Random(seed), **kw)

    def budget(self, strategy: str) -> Budget:
        return Budget(self.executor, self.config.budget_for(strategy), self.config.max_execs,
                      self.deadline)


def prepare_target(t: ConstraintTarget, ctx: SolverContext) -> ConstraintTarget:
    """Run the discovering input and compute prior and effective sets."""
    if t.result is None:
        t.result = execute(ctx.program, t.input, None, ctx.config.step_limit)
    pos = t.result.find(t.stmt, t.occurrence)
    if pos is None:
        raise ValueError(f"{t.stmt}#{t.occurrence} is not reached by the discovering input")
    if t.result.trace[pos].branch_taken == t.desired:
        raise ValueError(f"{t.stmt} already takes the desired branch")
    t.position = pos
    if t.priors is None:
        t.priors = PriorFinder(ctx.program, t.result, ctx.analyses, ctx.prior_cache).find(pos)
    if t.effective is None:
        tr = t.result.trace
        if tr[pos].mask:
            t.effective = effective_priors(tr[pos].taint, [(i, tr[i].taint) for i in t.priors])
        else:
            t.effective = EffectiveSet((), UnionFind())
    return t


def make_target(ctx: SolverContext, data: bytes, stmt: StmtId, desired: bool,
                occurrence: Optional[int] = None) -> ConstraintTarget:
    """Target the first occurrence (by default) of ``stmt`` on the run of ``data``."""
    r = execute(ctx.program, data, None, ctx.config.step_limit)
    if occurrence is None:
        occurrence = 0
    return prepare_target(ConstraintTarget(stmt, occurrence, desired, bytes(data), r), ctx)


# --------------------------------------------------------------------------
# strategies


class _Watch:
    """Remembers the first candidate on which the target was not reached."""

    def __init__(self):
        self.unforced: Optional[bytes] = None
        self.forced: Optional[bytes] = None

    def note(self, data: bytes, forced: bool) -> None:
        if forced:
            if self.forced is None:
                self.forced = data
        elif self.unforced is None:
            self.unforced = data


def _run_descent(ctx: SolverContext, strategy: str, mutable: int, plan: Optional[ForcePlan],
                 terms: list, start: bytes, budget, watch: Optional[_Watch] = None):
    observer = ctx.observer
    target_term = terms[0]

    def evaluate(data: bytes):
        if observer is not None:
            observer(strategy, start, mutable, data)
        r = ctx.executor.run(data, plan)
        total = 0
        for sid, occ, desired in terms:
            i = r.find(sid, occ)
            if i is None:
                if watch is not None and (sid, occ, desired) == target_term:
                    watch.note(data, plan is not None)
                return INF, False
            e = r.trace[i]
            total += rectify(transform_predicate(e.cmp, e.lhs_value, e.rhs_value, desired))
        return total, True

    segments: list = []
    out = descend(evaluate, mask_to_set(mutable), start, budget, ctx.rng,
                  ctx.config.max_restarts, segments)
    ctx.descent_log.append((strategy, segments))
    return out


def _verify(ctx: SolverContext, t: ConstraintTarget, data: bytes, watch: Optional[_Watch] = None):
    r = ctx.executor.run(data)
    i = r.find(t.stmt, t.occurrence)
    if i is None:
        if watch is not None:
            watch.note(data, False)
        return False
    return r.trace[i].branch_taken == t.desired


def _solved(ctx, t, strategy, data, budget) -> SolveOutcome:
    # re-check with a plain run; the invariant is that no Solved outcome is forced
    assert _verify(ctx, t, data), "solution failed unforced verification"
    return SolveOutcome(SolveStatus.SOLVED, data, None, budget.used, strategy)


def _unsolved(reason, budget, strategy, watch: Optional[_Watch] = None) -> SolveOutcome:
    out = SolveOutcome(SolveStatus.UNSOLVED, None, reason, budget.used, strategy)
    if watch is not None:
        out.unreached_input = watch.unforced or watch.forced
    return out


def _target_term(t: ConstraintTarget) -> tuple:
    return (t.stmt, t.occurrence, t.desired)


def _single_descent(t: ConstraintTarget, ctx: SolverContext, strategy: str, mutable: int):
    budget = ctx.budget(strategy)
    if not mutable:
        return _unsolved(NO_MUTABLE_BYTES, budget, strategy)
    watch = _Watch()
    cand = _run_descent(ctx, strategy, mutable, None, [_target_term(t)], t.input, budget, watch)
    if cand is not None and _verify(ctx, t, cand, watch):
        return _solved(ctx, t, strategy, cand, budget)
    reason = VERIFICATION_FAILED if cand is not None else (
        TARGET_UNREACHABLE if watch.unforced is not None else BUDGET_EXHAUSTED)
    return _unsolved(reason, budget, strategy, watch)


def strategy_plain(t: ConstraintTarget, ctx: SolverContext) -> SolveOutcome:
    """Descent over every byte flowing into the target, no forcing."""
    return _single_descent(t, ctx, "plain", t.target_mask)


def strategy_reachability(t: ConstraintTarget, ctx: SolverContext) -> SolveOutcome:
    mutable = t.target_mask & ~t.mask(t.effective_positions())
    return _single_descent(t, ctx, "pr", mutable)


def strategy_satisfiability(t: ConstraintTarget, ctx: SolverContext,
                            forward: Optional[bytes] = None) -> SolveOutcome:
    """Forward phase under forcing, then backtrack over effective priors.

    ``forward`` skips the forward phase and backtracks from the given
    candidate (used to replay specific forward results).
    """
    budget = ctx.budget("ps")
    eff = t.effective_positions()
    watch = _Watch()
    if not t.target_mask:
        return _unsolved(NO_MUTABLE_BYTES, budget, "ps")
    if forward is None:
        forward = _run_descent(ctx, "ps", t.target_mask, t.plan(eff), [_target_term(t)],
                               t.input, budget, watch)
        if forward is None:
            reason = TARGET_UNREACHABLE if watch.unforced is not None else BUDGET_EXHAUSTED
            return _unsolved(reason, budget, "ps", watch)
        if _verify(ctx, t, forward, watch):
            return _solved(ctx, t, "ps", forward, budget)

    frozen = t.target_mask
    current, produced = forward, False
    for pos in eff:
        if budget.exhausted():
            break
        own = t.mask([pos])
        free = own & ~frozen
        if free:
            e = t.entry(pos)
            earlier = [p for p in eff if p < pos]
            sub = _run_descent(ctx, "ps", free, t.plan(earlier),
                               [(e.stmt, e.occurrence, e.branch_taken)], current, budget)
            if sub is not None:
                current, produced = sub, True
                if _verify(ctx, t, current, watch):
                    return _solved(ctx, t, "ps", current, budget)
        frozen |= own
    reason = VERIFICATION_FAILED if produced else (
        BUDGET_EXHAUSTED if budget.exhausted() or not eff else VERIFICATION_FAILED)
    return _unsolved(reason, budget, "ps", watch)


def joint_terms(t: ConstraintTarget) -> list:
    """(stmt, occurrence, desired) for the target followed by each effective prior."""
    terms = [_target_term(t)]
    for p in t.effective_positions():
        e = t.entry(p)
        terms.append((e.stmt, e.occurrence, e.branch_taken))
    return terms


def evaluate_joint(t: ConstraintTarget, ctx: SolverContext, data: bytes) -> Optional[JointObjective]:
    """Joint objective on ``data`` with the effective priors held by force.

    None when a constraint of the objective is not reached at all.
    """
    r = ctx.executor.run(data, t.plan(t.effective_positions()))
    terms = []
    for sid, occ, desired in joint_terms(t):
        i = r.find(sid, occ)
        if i is None:
            return None
        e = r.trace[i]
        terms.append(ObjectiveTerm(sid, occ, desired,
                                   transform_predicate(e.cmp, e.lhs_value, e.rhs_value, desired)))
    return JointObjective(tuple(terms))


def strategy_joint(t: ConstraintTarget, ctx: SolverContext,
                   start: Optional[bytes] = None) -> SolveOutcome:
    """Joint descent; ``start`` overrides the discovering input as starting point."""
    budget = ctx.budget("jo")
    eff = t.effective_positions()
    mutable = t.target_mask | t.mask(eff)
    if not mutable:
        return _unsolved(NO_MUTABLE_BYTES, budget, "jo")
    watch = _Watch()
    cand = _run_descent(ctx, "jo", mutable, t.plan(eff), joint_terms(t),
                        t.input if start is None else bytes(start), budget, watch)
    if cand is None:
        reason = TARGET_UNREACHABLE if watch.unforced is not None else BUDGET_EXHAUSTED
        return _unsolved(reason, budget, "jo", watch)
    if _verify(ctx, t, cand, watch):
        return _solved(ctx, t, "jo", cand, budget)
    return _unsolved(VERIFICATION_FAILED, budget, "jo", watch)


_STRATEGY_FUNCS = {"pr": strategy_reachability, "ps": strategy_satisfiability,
                   "jo": strategy_joint}


def _absorb_implicit(t: ConstraintTarget, ctx: SolverContext, mutated: bytes) -> bool:
    """Run implicit detection against ``mutated``; True if new priors were added."""
    r = ctx.executor.run(mutated)
    if r.find(t.stmt, t.occurrence) is not None:
        return False
    try:
        rep = detect_implicit_priors(ctx.program, t.input, mutated, t,
                                     run=ctx.executor.run, mutated_result=r,
                                     log=ctx.implicit_log)
    except PreconditionViolated:
        return False
    ctx.implicit_detections += 1
    new = [p for p in rep.confirmed if p not in t.implicit]
    t.implicit.extend(new)
    ctx.events.append(("implicit", str(t.stmt), [str(t.entry(p).stmt) for p in new]))
    return bool(new)


def solve_constraint(t: ConstraintTarget, ctx: SolverContext) -> SolveOutcome:
    """Plain descent first; for nested targets then pr, ps and jo in that order."""
    prepare_target(t, ctx)
    t.attempts["solve"] += 1
    start = ctx.executor.count
    attempts, timings = [], []

    def finish(out: SolveOutcome) -> SolveOutcome:
        out.attempts = attempts
        out.timings = timings
        out.executions = ctx.executor.count - start
        return out

    def attempt(name: str, fn) -> SolveOutcome:
        t.attempts[name] += 1
        attempts.append(name)
        t0 = time.monotonic()
        res = fn(t, ctx)
        timings.append((name, time.monotonic() - t0))
        return res

    out = attempt("plain", strategy_plain)
    if out.solved:
        return finish(out)
    # unreachable candidates hint at dependencies the taint labels miss
    nested = bool(t.effective_positions()) or out.reason == TARGET_UNREACHABLE
    if not nested:
        return finish(out)
    cfg = ctx.config
    enabled = {"pr": cfg.enable_pr, "ps": cfg.enable_ps, "jo": cfg.enable_jo}
    for name in ("pr", "ps", "jo"):
        if not enabled[name]:
            continue
        if ctx.deadline is not None and time.monotonic() >= ctx.deadline:
            break
        fn = _STRATEGY_FUNCS[name]
        out = attempt(name, fn)
        if out.solved:
            return finish(out)
        if name != "pr" and out.unreached_input is not None:
            if _absorb_implicit(t, ctx, out.unreached_input):
                out = attempt(name, fn)
                if out.solved:
                    return finish(out)
    return finish(out)
