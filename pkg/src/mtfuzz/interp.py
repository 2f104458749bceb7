"""Byte-level taint-tracking interpreter with forced branches and trace recording.

Taint labels are carried as int bitmasks over input offsets (bit ``i`` set
means input byte ``i`` flows into the value).  Only explicit dataflow is
tracked; values assigned under a tainted guard stay untainted.
"""

from __future__ import annotations

import enum
import sys
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .ir import (BinOp, Branch, Call, CallStmt, Const, ExitTerm, ICall, InputRead,
                 Jump, Let, Neg, Program, Ret, StmtId, Var, Assign, AbortTerm,
                 validate_program)

DEFAULT_STEP_LIMIT = 1_000_000
MAX_DEPTH = 200

_MASK64 = (1 << 64) - 1
_SIGN64 = 1 << 63


def wrap64(v: int) -> int:
    v &= _MASK64
    return v - (1 << 64) if v & _SIGN64 else v


def mask_to_set(mask: int) -> frozenset:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return frozenset(out)


def set_to_mask(offsets: Iterable[int]) -> int:
    m = 0
    for o in offsets:
        m |= 1 << o
    return m


def _cdiv(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _cmod(a: int, b: int) -> int:
    return a - b * _cdiv(a, b)


CMP_FUNCS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}


class Status(enum.Enum):
    NORMAL = "normal"
    ABORTED = "aborted"
    EXITED = "exited"
    RUNTIME_ERROR = "runtime-error"
    LIMIT_EXCEEDED = "limit-exceeded"


class NotExecutable(Exception):
    """Raised when asked to run a program whose validation report has errors."""


@dataclass(frozen=True)
class ForcePlan:
    """Branch overrides for one run.

    ``listed`` mode forces the (StmtId, occurrence) pairs in ``branches``.
    ``recorded`` mode replays a recorded (StmtId, branch) sequence by trace
    position, until the program departs from the recorded statement order.
    """

    branches: dict = field(default_factory=dict)
    recorded: Optional[tuple] = None

    @classmethod
    def listed(cls, branches: dict) -> "ForcePlan":
        for (_, occ) in branches:
            if occ < 0:
                raise ValueError("occurrence indices are non-negative")
        return cls(dict(branches))

    @classmethod
    def replay(cls, choices: Iterable) -> "ForcePlan":
        return cls({}, tuple((sid, bool(b)) for sid, b in choices))

    @property
    def force_all_recorded(self) -> bool:
        return self.recorded is not None


@dataclass(slots=True)
class TraceEntry:
    stmt: StmtId
    occurrence: int
    frame: int
    branch_taken: bool
    natural: bool
    cmp: str
    lhs_value: int
    rhs_value: int
    lhs_mask: int
    rhs_mask: int
    forced: bool

    @property
    def lhs_taint(self) -> frozenset:
        return mask_to_set(self.lhs_mask)

    @property
    def rhs_taint(self) -> frozenset:
        return mask_to_set(self.rhs_mask)

    @property
    def mask(self) -> int:
        return self.lhs_mask | self.rhs_mask

    @property
    def taint(self) -> frozenset:
        """Input bytes flowing into either operand."""
        return mask_to_set(self.mask)

    @property
    def diverged(self) -> bool:
        return self.forced and self.natural != self.branch_taken

    def format(self) -> str:
        flag = "F" if self.forced else "-"
        if self.diverged:
            flag = "D"
        return (f"{self.stmt}#{self.occurrence} fr={self.frame} {flag} "
                f"{'T' if self.branch_taken else 'F'} "
                f"{self.lhs_value} {self.cmp} {self.rhs_value} "
                f"taint={sorted(self.taint)}")


@dataclass(frozen=True)
class Frame:
    id: int
    function: str
    parent: Optional[int]
    call_site: Optional[tuple]  # (function, block) of the call in the parent frame


@dataclass
class ExecutionResult:
    trace: list
    frames: list
    status: Status
    detail: str = ""
    edges: frozenset = frozenset()
    steps: int = 0
    forced: bool = False
    _index: Optional[dict] = field(default=None, repr=False, compare=False)

    def find(self, stmt: StmtId, occurrence: int = 0) -> Optional[int]:
        """Trace position of ``stmt`` at ``occurrence``, or None if not reached."""
        if self._index is None:
            self._index = {(e.stmt, e.occurrence): i for i, e in enumerate(self.trace)}
        return self._index.get((stmt, occurrence))

    def choices(self) -> list:
        return [(e.stmt, e.branch_taken) for e in self.trace]

    def takes(self, stmt: StmtId, occurrence: int, branch: bool) -> bool:
        i = self.find(stmt, occurrence)
        return i is not None and self.trace[i].branch_taken == branch

    def ancestors(self, frame: int) -> dict:
        """Map each frame on the stack of ``frame`` to its child on that stack."""
        out = {}
        child = frame
        parent = self.frames[frame].parent
        while parent is not None:
            out[parent] = child
            child, parent = parent, self.frames[parent].parent
        return out

    def dump(self) -> str:
        head = f"status={self.status.value}"
        if self.detail:
            head += f" ({self.detail})"
        return "\n".join([head] + [e.format() for e in self.trace])


# --------------------------------------------------------------------------
# runtime


class _Stop(Exception):
    def __init__(self, status: Status, detail: str = ""):
        self.status = status
        self.detail = detail


class _State:
    __slots__ = ("data", "plan", "limit", "steps", "trace", "frames", "occ", "edges",
                 "depth", "replay_ok")

    def __init__(self, data: bytes, plan: Optional[ForcePlan], limit: int):
        self.data = data
        self.plan = plan
        self.limit = limit
        self.steps = 0
        self.trace: list = []
        self.frames: list = []
        self.occ: dict = {}
        self.edges: set = set()
        self.depth = 0
        self.replay_ok = True

    def step(self) -> None:
        self.steps += 1
        if self.steps > self.limit:
            raise _Stop(Status.LIMIT_EXCEEDED)


def _read_input(st: _State, off: int, width: int) -> int:
    data = st.data
    if off < 0 or off + width > len(data):
        raise _Stop(Status.RUNTIME_ERROR, "InputTooShort")
    v = int.from_bytes(data[off:off + width], "little")
    return wrap64(v) if width == 8 else v


def _binop(op: str, a: int, b: int) -> int:
    if op == "+":
        return wrap64(a + b)
    if op == "-":
        return wrap64(a - b)
    if op == "*":
        return wrap64(a * b)
    if op == "/":
        if b == 0:
            raise _Stop(Status.RUNTIME_ERROR, "DivByZero")
        return wrap64(_cdiv(a, b))
    if op == "%":
        if b == 0:
            raise _Stop(Status.RUNTIME_ERROR, "DivByZero")
        return wrap64(_cmod(a, b))
    if op == "&":
        return a & b
    if op == "|":
        return a | b
    if op == "^":
        return a ^ b
    if op == "<<":
        return wrap64(a << (b & 63))
    if op == ">>":
        return a >> (b & 63)
    raise ValueError(op)  # pragma: no cover


class _Compiled:
    """Expressions turned into closures ``fn(env, st) -> (value, mask)``."""

    def __init__(self, program: Program):
        self.program = program
        self.funcs: dict = {}
        for f in program.functions:
            blocks = []
            for b in f.cfg.blocks:
                instrs = [self._instr(ins, f.name, b.id) for ins in b.instrs]
                blocks.append((instrs, self._term(b.term, f.name, b.id)))
            self.funcs[f.name] = (f.params, blocks)

    def _instr(self, ins, fname: str, bid: int):
        if isinstance(ins, (Let, Assign)):
            ev = self.expr(ins.expr, fname, bid)
            name = ins.name

            def run(env, st):
                env[name] = ev(env, st)
            return run
        if isinstance(ins, CallStmt):
            ev = self.expr(ins.call, fname, bid)

            def run(env, st):
                ev(env, st)
            return run
        raise TypeError(ins)  # pragma: no cover

    def _term(self, t, fname: str, bid: int):
        if isinstance(t, Jump):
            return ("jump", t.target)
        if isinstance(t, Branch):
            c = t.cond
            return ("branch", c.sid, c.op, CMP_FUNCS[c.op], self.expr(c.lhs, fname, bid),
                    self.expr(c.rhs, fname, bid), t.true, t.false)
        if isinstance(t, Ret):
            ev = self.expr(t.expr, fname, bid) if t.expr is not None else None
            return ("ret", ev)
        if isinstance(t, ExitTerm):
            return ("exit",)
        if isinstance(t, AbortTerm):
            return ("abort", t.tag)
        raise TypeError(t)  # pragma: no cover

    def expr(self, e, fname: str, bid: int) -> Callable:
        if isinstance(e, Const):
            v = wrap64(e.value)
            return lambda env, st: (v, 0)
        if isinstance(e, Var):
            name = e.name
            return lambda env, st: env.get(name, (0, 0))
        if isinstance(e, InputRead):
            off = self.expr(e.offset, fname, bid)
            width = e.width
            span = (1 << width) - 1

            def read(env, st):
                o, _ = off(env, st)
                return _read_input(st, o, width), span << o if o >= 0 else 0
            return read
        if isinstance(e, Neg):
            inner = self.expr(e.operand, fname, bid)

            def neg(env, st):
                v, m = inner(env, st)
                return wrap64(-v), m
            return neg
        if isinstance(e, BinOp):
            lhs = self.expr(e.lhs, fname, bid)
            rhs = self.expr(e.rhs, fname, bid)
            op = e.op

            def binop(env, st):
                a, ma = lhs(env, st)
                b, mb = rhs(env, st)
                return _binop(op, a, b), ma | mb
            return binop
        if isinstance(e, Call):
            args = [self.expr(a, fname, bid) for a in e.args]
            callee = e.func
            site = (fname, bid)

            def call(env, st):
                vals = [a(env, st) for a in args]
                return self.invoke(callee, vals, st, env["__frame__"], site)
            return call
        if isinstance(e, ICall):
            sel = self.expr(e.selector, fname, bid)
            args = [self.expr(a, fname, bid) for a in e.args]
            table = e.table
            site = (fname, bid)

            def icall(env, st):
                s, _ = sel(env, st)
                if not 0 <= s < len(table):
                    raise _Stop(Status.RUNTIME_ERROR, "BadSelector")
                vals = [a(env, st) for a in args]
                return self.invoke(table[s], vals, st, env["__frame__"], site)
            return icall
        raise TypeError(e)  # pragma: no cover

    def invoke(self, fname: str, args: list, st: _State, parent: Optional[int],
               site: Optional[tuple]):
        params, blocks = self.funcs[fname]
        if st.depth >= MAX_DEPTH:
            raise _Stop(Status.RUNTIME_ERROR, "StackOverflow")
        fid = len(st.frames)
        st.frames.append(Frame(fid, fname, parent, site))
        env = dict(zip(params, args))
        env["__frame__"] = fid
        st.depth += 1
        plan = st.plan
        trace = st.trace
        b = 0
        try:
            while True:
                instrs, term = blocks[b]
                for ins in instrs:
                    st.step()
                    ins(env, st)
                st.step()
                kind = term[0]
                if kind == "jump":
                    b = term[1]
                elif kind == "branch":
                    _, sid, op, fn, lhs, rhs, bt, bf = term
                    a, ma = lhs(env, st)
                    c, mc = rhs(env, st)
                    natural = fn(a, c)
                    occ = st.occ.get(sid, 0)
                    st.occ[sid] = occ + 1
                    forced = None
                    if plan is not None:
                        if plan.recorded is not None:
                            i = len(trace)
                            if st.replay_ok and i < len(plan.recorded):
                                rsid, rb = plan.recorded[i]
                                if rsid == sid:
                                    forced = rb
                                else:
                                    st.replay_ok = False
                        else:
                            forced = plan.branches.get((sid, occ))
                    taken = natural if forced is None else forced
                    trace.append(TraceEntry(sid, occ, fid, taken, natural, op, a, c, ma, mc,
                                            forced is not None))
                    st.edges.add((sid, taken))
                    b = bt if taken else bf
                elif kind == "ret":
                    return term[1](env, st) if term[1] is not None else (0, 0)
                elif kind == "exit":
                    raise _Stop(Status.EXITED)
                else:
                    raise _Stop(Status.ABORTED, term[1])
        finally:
            st.depth -= 1


def _compiled(p: Program) -> _Compiled:
    c = p.__dict__.get("_compiled")
    if c is None:
        rep = validate_program(p)
        if not rep.executable:
            raise NotExecutable("; ".join(i.message for i in rep.errors))
        c = _Compiled(p)
        p.__dict__["_compiled"] = c
    return c


def execute(p: Program, data: bytes, plan: Optional[ForcePlan] = None,
            limit: int = DEFAULT_STEP_LIMIT) -> ExecutionResult:
    """Run ``p`` on ``data``; deterministic for fixed (program, input, plan)."""
    if limit <= 0:
        raise ValueError("step budget must be positive")
    comp = _compiled(p)
    st = _State(bytes(data), plan, limit)
    status, detail = Status.NORMAL, ""
    if sys.getrecursionlimit() < 20 * MAX_DEPTH:
        sys.setrecursionlimit(20 * MAX_DEPTH)
    try:
        comp.invoke(p.entry, [], st, None, None)
    except _Stop as stop:
        status, detail = stop.status, stop.detail
    return ExecutionResult(st.trace, st.frames, status, detail, frozenset(st.edges),
                           st.steps, plan is not None)


def replay_with_choices(p: Program, data: bytes, choices: Iterable,
                        limit: int = DEFAULT_STEP_LIMIT) -> ExecutionResult:
    """Run ``data`` while forcing the recorded (StmtId, branch) sequence.

    Entries whose natural outcome differs from the recorded one have
    ``diverged`` set.
    """
    return execute(p, data, ForcePlan.replay(choices), limit)
