"""Target language: syntax tree, parser, pretty-printer, validation and CFG lowering.

A target is a list of functions written in a small C-like language::

    fn main() {
        let x = in(0, 4);
        if x < 2 && x != 0 { abort "small"; }
    }

Values are 64-bit signed integers.  ``in(offset, width)`` reads ``width`` input
bytes little-endian.  Every comparison inside an ``if``/``while`` condition is
its own conditional statement; ``&&`` and ``||`` are lowered to nested branches.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional, Union

CMP_OPS = ("<", "<=", ">", ">=", "==", "!=")
BIN_OPS = ("+", "-", "*", "/", "%", "&", "|", "^", "<<", ">>")
VALID_WIDTHS = (1, 2, 4, 8)
ENTRY = "main"

KEYWORDS = {"fn", "let", "if", "else", "while", "return", "exit", "abort",
            "call", "icall", "in"}


class StmtId(NamedTuple):
    """Function index plus statement index, both in source order."""

    func: int
    idx: int

    def __str__(self) -> str:
        return f"{self.func}:{self.idx}"


# --------------------------------------------------------------------------
# errors


class TargetError(Exception):
    """Base class for errors raised while building a target program."""


class TargetSyntaxError(TargetError):
    def __init__(self, line: int, col: int, message: str):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col
        self.message = message


class DuplicateFunction(TargetError):
    pass


class UnknownCallee(TargetError):
    pass


# --------------------------------------------------------------------------
# expressions


@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class InputRead:
    offset: "Expr"
    width: int


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple = ()


@dataclass(frozen=True)
class ICall:
    selector: "Expr"
    table: tuple
    args: tuple = ()


Expr = Union[Const, Var, InputRead, Neg, BinOp, Call, ICall]


# --------------------------------------------------------------------------
# conditions and statements


@dataclass
class Cmp:
    """A single comparison: the predicate of one conditional statement."""

    op: str
    lhs: Expr
    rhs: Expr
    sid: Optional[StmtId] = field(default=None)
    line: int = field(default=0, compare=False)


@dataclass
class And:
    lhs: "Cond"
    rhs: "Cond"


@dataclass
class Or:
    lhs: "Cond"
    rhs: "Cond"


Cond = Union[Cmp, And, Or]


@dataclass
class Let:
    name: str
    expr: Expr
    sid: Optional[StmtId] = None
    line: int = field(default=0, compare=False)


@dataclass
class Assign:
    name: str
    expr: Expr
    sid: Optional[StmtId] = None
    line: int = field(default=0, compare=False)


@dataclass
class If:
    cond: Cond
    then: list
    orelse: list
    line: int = field(default=0, compare=False)


@dataclass
class While:
    cond: Cond
    body: list
    line: int = field(default=0, compare=False)


@dataclass
class Return:
    expr: Optional[Expr] = None
    sid: Optional[StmtId] = None
    line: int = field(default=0, compare=False)


@dataclass
class Exit:
    sid: Optional[StmtId] = None
    line: int = field(default=0, compare=False)


@dataclass
class Abort:
    tag: str
    sid: Optional[StmtId] = None
    line: int = field(default=0, compare=False)


@dataclass
class CallStmt:
    call: Union[Call, ICall]
    sid: Optional[StmtId] = None
    line: int = field(default=0, compare=False)


Stmt = Union[Let, Assign, If, While, Return, Exit, Abort, CallStmt]


def cond_atoms(cond: Cond) -> Iterator[Cmp]:
    """Comparisons of a condition in source order."""
    if isinstance(cond, Cmp):
        yield cond
    else:
        yield from cond_atoms(cond.lhs)
        yield from cond_atoms(cond.rhs)


def iter_stmts(stmts: list) -> Iterator[Stmt]:
    """Pre-order walk over a statement list."""
    for s in stmts:
        yield s
        if isinstance(s, If):
            yield from iter_stmts(s.then)
            yield from iter_stmts(s.orelse)
        elif isinstance(s, While):
            yield from iter_stmts(s.body)


def iter_exprs(e: Expr) -> Iterator[Expr]:
    yield e
    if isinstance(e, InputRead):
        yield from iter_exprs(e.offset)
    elif isinstance(e, Neg):
        yield from iter_exprs(e.operand)
    elif isinstance(e, BinOp):
        yield from iter_exprs(e.lhs)
        yield from iter_exprs(e.rhs)
    elif isinstance(e, Call):
        for a in e.args:
            yield from iter_exprs(a)
    elif isinstance(e, ICall):
        yield from iter_exprs(e.selector)
        for a in e.args:
            yield from iter_exprs(a)


def stmt_exprs(s: Stmt) -> Iterator[Expr]:
    """Expressions directly owned by a statement (not its nested blocks)."""
    if isinstance(s, (Let, Assign)):
        yield s.expr
    elif isinstance(s, Return) and s.expr is not None:
        yield s.expr
    elif isinstance(s, CallStmt):
        yield s.call
    elif isinstance(s, (If, While)):
        for c in cond_atoms(s.cond):
            yield c.lhs
            yield c.rhs


# --------------------------------------------------------------------------
# control-flow graph


@dataclass(frozen=True)
class Jump:
    target: int


@dataclass(frozen=True)
class Branch:
    cond: Cmp
    true: int
    false: int


@dataclass(frozen=True)
class Ret:
    expr: Optional[Expr]


@dataclass(frozen=True)
class ExitTerm:
    pass


@dataclass(frozen=True)
class AbortTerm:
    tag: str


Terminator = Union[Jump, Branch, Ret, ExitTerm, AbortTerm]


@dataclass
class Block:
    id: int
    instrs: list = field(default_factory=list)
    term: Optional[Terminator] = None
    has_source: bool = False


class CFG:
    """Basic blocks of one function plus a synthetic exit node.

    The exit node has id ``len(blocks)``.  Blocks ending in ``return`` flow to
    it; blocks ending in ``exit``/``abort`` are irregular and have no
    successors at all.
    """

    def __init__(self, n: int, succ: list, irregular: set, blocks: Optional[list] = None,
                 entry: int = 0):
        self.n = n
        self.entry = entry
        self.exit = n
        self.succ = [tuple(s) for s in succ] + [()]
        self.irregular = frozenset(irregular)
        self.blocks = blocks
        self.pred: list = [[] for _ in range(n + 1)]
        for a, ss in enumerate(self.succ):
            for b in ss:
                self.pred[b].append(a)
        self.cond_block: dict = {}
        if blocks is not None:
            for b in blocks:
                if isinstance(b.term, Branch):
                    self.cond_block[b.term.cond.sid] = b.id

    @classmethod
    def from_edges(cls, n: int, edges: dict, returns=(), irregular=()) -> "CFG":
        """Build a bare graph: ``edges[i]`` lists successors of block ``i``;
        ``returns`` blocks flow to the synthetic exit."""
        succ = []
        for i in range(n):
            s = list(edges.get(i, ()))
            if i in returns:
                s.append(n)
            succ.append(s)
        return cls(n, succ, set(irregular))

    def nodes(self) -> range:
        return range(self.n + 1)

    def reachable(self) -> set:
        seen = {self.entry}
        stack = [self.entry]
        while stack:
            a = stack.pop()
            for b in self.succ[a]:
                if b not in seen:
                    seen.add(b)
                    stack.append(b)
        return seen

    def dead_blocks(self) -> list:
        live = self.reachable()
        return [b.id for b in (self.blocks or []) if b.id not in live and b.has_source]


class _Lowerer:
    def __init__(self):
        self.blocks: list = []

    def new(self) -> int:
        b = Block(len(self.blocks))
        self.blocks.append(b)
        return b.id

    def cond(self, c: Cond, t: int, f: int, into: int) -> None:
        if isinstance(c, Cmp):
            self.blocks[into].term = Branch(c, t, f)
            self.blocks[into].has_source = True
        elif isinstance(c, And):
            mid = self.new()
            self.cond(c.lhs, mid, f, into)
            self.cond(c.rhs, t, f, mid)
        else:
            mid = self.new()
            self.cond(c.lhs, t, mid, into)
            self.cond(c.rhs, t, f, mid)

    def stmts(self, stmts: list, cur: int) -> Optional[int]:
        # returns the open block after the list, or None if control never falls through
        for s in stmts:
            if cur is None:
                cur = self.new()
            blk = self.blocks[cur]
            if isinstance(s, (Let, Assign, CallStmt)):
                blk.instrs.append(s)
                blk.has_source = True
            elif isinstance(s, Return):
                blk.term = Ret(s.expr)
                blk.has_source = True
                cur = None
            elif isinstance(s, Exit):
                blk.term = ExitTerm()
                blk.has_source = True
                cur = None
            elif isinstance(s, Abort):
                blk.term = AbortTerm(s.tag)
                blk.has_source = True
                cur = None
            elif isinstance(s, If):
                then_b = self.new()
                else_b = self.new() if s.orelse else None
                join = self.new()
                self.cond(s.cond, then_b, else_b if else_b is not None else join, cur)
                end = self.stmts(s.then, then_b)
                if end is not None:
                    self.blocks[end].term = Jump(join)
                if else_b is not None:
                    end = self.stmts(s.orelse, else_b)
                    if end is not None:
                        self.blocks[end].term = Jump(join)
                cur = join
            elif isinstance(s, While):
                head = self.new()
                blk.term = Jump(head)
                body = self.new()
                after = self.new()
                self.cond(s.cond, body, after, head)
                end = self.stmts(s.body, body)
                if end is not None:
                    self.blocks[end].term = Jump(head)
                cur = after
            else:  # pragma: no cover
                raise TypeError(s)
        return cur


def lower_to_cfg(f: "Function") -> CFG:
    """Lower a function body to basic blocks."""
    lw = _Lowerer()
    entry = lw.new()
    end = lw.stmts(f.body, entry)
    if end is not None:
        lw.blocks[end].term = Ret(None)
    n = len(lw.blocks)
    succ, irregular = [], set()
    for b in lw.blocks:
        t = b.term
        if t is None:  # unreachable empty join
            t = b.term = Ret(None)
        if isinstance(t, Jump):
            succ.append([t.target])
        elif isinstance(t, Branch):
            succ.append([t.true, t.false])
        elif isinstance(t, Ret):
            succ.append([n])
        else:
            succ.append([])
            irregular.add(b.id)
    return CFG(n, succ, irregular, lw.blocks)


# --------------------------------------------------------------------------
# program


@dataclass
class Function:
    name: str
    params: tuple
    body: list
    index: int = 0
    line: int = field(default=0, compare=False)
    cfg: Optional[CFG] = field(default=None, compare=False, repr=False)

    def cond_stmts(self) -> list:
        out = []
        for s in iter_stmts(self.body):
            if isinstance(s, (If, While)):
                out.extend(cond_atoms(s.cond))
        return out


@dataclass
class Program:
    functions: list
    entry: str = ENTRY

    def __post_init__(self):
        self._by_name = {f.name: f for f in self.functions}
        self._conds: dict = {}
        for i, f in enumerate(self.functions):
            f.index = i
            _assign_ids(f)
            f.cfg = lower_to_cfg(f)
            for c in f.cond_stmts():
                self._conds[c.sid] = (f.name, c)

    def function(self, name: str) -> Function:
        return self._by_name[name]

    def has_function(self, name: str) -> bool:
        return name in self._by_name

    def cond_stmts(self) -> list:
        """All conditional statements (comparisons) in source order."""
        return [c for f in self.functions for c in f.cond_stmts()]

    def cond(self, sid: StmtId) -> Cmp:
        return self._conds[sid][1]

    def locate(self, sid: StmtId) -> tuple:
        """(function name, block id) of the block a conditional statement terminates."""
        fname = self._conds[sid][0]
        return fname, self._by_name[fname].cfg.cond_block[sid]

    def stmt_id(self, text: str) -> StmtId:
        """Parse ``"1:4"`` or ``"foo:4"`` into a StmtId."""
        a, _, b = text.partition(":")
        if not b:
            raise ValueError(f"bad statement id {text!r}")
        func = int(a) if a.isdigit() else self.function(a).index
        return StmtId(func, int(b))


def _assign_ids(f: Function) -> None:
    n = 0
    for s in iter_stmts(f.body):
        if isinstance(s, (If, While)):
            for c in cond_atoms(s.cond):
                c.sid = StmtId(f.index, n)
                n += 1
        else:
            s.sid = StmtId(f.index, n)
            n += 1


# --------------------------------------------------------------------------
# parser

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+) | (?P<nl>\n) | (?P<comment>//[^\n]*|\#[^\n]*)
  | (?P<int>0[xX][0-9a-fA-F]+|\d+)
  | (?P<str>"[^"\n]*")
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><<|>>|<=|>=|==|!=|&&|\|\||[-+*/%&|^<>=(){}\[\];,])
""", re.VERBOSE)


class _Tok(NamedTuple):
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list:
    toks, pos, line, lstart = [], 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise TargetSyntaxError(line, pos - lstart + 1, f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            lstart = m.end()
        elif kind not in ("ws", "comment"):
            if kind == "name" and m.group() in KEYWORDS:
                kind = "kw"
            toks.append(_Tok(kind, m.group(), line, pos - lstart + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - lstart + 1))
    return toks


_BIN_LEVELS = (("|",), ("^",), ("&",), ("<<", ">>"), ("+", "-"), ("*", "/", "%"))


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: Optional[_Tok] = None):
        tok = tok or self.tok
        return TargetSyntaxError(tok.line, tok.col, msg)

    def at(self, text: str) -> bool:
        t = self.tok
        return t.text == text and t.kind in ("op", "kw")

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> _Tok:
        if not self.at(text):
            got = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, got {got!r}")
        t = self.tok
        self.i += 1
        return t

    def name(self) -> str:
        t = self.tok
        if t.kind != "name":
            raise self.error(f"expected identifier, got {t.text or 'end of input'!r}")
        self.i += 1
        return t.text

    def program(self) -> list:
        funcs = []
        while self.tok.kind != "eof":
            funcs.append(self.function())
        return funcs

    def function(self) -> Function:
        line = self.expect("fn").line
        name = self.name()
        self.expect("(")
        params = []
        if not self.at(")"):
            params.append(self.name())
            while self.accept(","):
                params.append(self.name())
        self.expect(")")
        return Function(name, tuple(params), self.block(), line=line)

    def block(self) -> list:
        self.expect("{")
        body = []
        while not self.accept("}"):
            if self.tok.kind == "eof":
                raise self.error("unterminated block")
            body.append(self.stmt())
        return body

    def stmt(self) -> Stmt:
        t = self.tok
        line = t.line
        if self.accept("let"):
            name = self.name()
            self.expect("=")
            e = self.expr()
            self.expect(";")
            return Let(name, e, line=line)
        if self.accept("if"):
            return self.if_rest(line)
        if self.accept("while"):
            c = self.cond()
            return While(c, self.block(), line=line)
        if self.accept("return"):
            e = None if self.at(";") else self.expr()
            self.expect(";")
            return Return(e, line=line)
        if self.accept("exit"):
            self.expect(";")
            return Exit(line=line)
        if self.accept("abort"):
            s = self.tok
            if s.kind != "str":
                raise self.error("abort expects a string tag")
            self.i += 1
            self.expect(";")
            return Abort(s.text[1:-1], line=line)
        if self.accept("call"):
            fname = self.name()
            c = Call(fname, self.args())
            self.expect(";")
            return CallStmt(c, line=line)
        if self.accept("icall"):
            c = self.icall_rest()
            self.expect(";")
            return CallStmt(c, line=line)
        if t.kind == "name":
            name = self.name()
            self.expect("=")
            e = self.expr()
            self.expect(";")
            return Assign(name, e, line=line)
        raise self.error(f"unexpected {t.text or 'end of input'!r}")

    def if_rest(self, line: int) -> If:
        c = self.cond()
        then = self.block()
        orelse = []
        if self.accept("else"):
            if self.at("if"):
                l2 = self.expect("if").line
                orelse = [self.if_rest(l2)]
            else:
                orelse = self.block()
        return If(c, then, orelse, line=line)

    def cond(self) -> Cond:
        c = self.conj()
        while self.accept("||"):
            c = Or(c, self.conj())
        return c

    def conj(self) -> Cond:
        c = self.catom()
        while self.accept("&&"):
            c = And(c, self.catom())
        return c

    def catom(self) -> Cond:
        start = self.i
        line = self.tok.line
        try:
            lhs = self.expr()
            if self.tok.kind == "op" and self.tok.text in CMP_OPS:
                op = self.tok.text
                self.i += 1
                return Cmp(op, lhs, self.expr(), line=line)
            err = self.error("expected comparison operator")
        except TargetSyntaxError as e:
            err = e
        # parenthesised condition
        self.i = start
        if self.accept("("):
            c = self.cond()
            self.expect(")")
            return c
        raise err

    def args(self) -> tuple:
        self.expect("(")
        out = []
        if not self.at(")"):
            out.append(self.expr())
            while self.accept(","):
                out.append(self.expr())
        self.expect(")")
        return tuple(out)

    def icall_rest(self) -> ICall:
        sel = self.expr()
        self.expect("[")
        table = [self.name()]
        while self.accept(","):
            table.append(self.name())
        self.expect("]")
        args = self.args() if self.at("(") else ()
        return ICall(sel, tuple(table), args)

    def expr(self, level: int = 0) -> Expr:
        if level == len(_BIN_LEVELS):
            return self.unary()
        e = self.expr(level + 1)
        ops = _BIN_LEVELS[level]
        while self.tok.kind == "op" and self.tok.text in ops:
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.expr(level + 1))
        return e

    def unary(self) -> Expr:
        if self.accept("-"):
            return Neg(self.unary())
        return self.primary()

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "int":
            self.i += 1
            return Const(int(t.text, 0))
        if self.accept("in"):
            self.expect("(")
            off = self.expr()
            self.expect(",")
            w = self.tok
            if w.kind != "int":
                raise self.error("input width must be an integer literal")
            self.i += 1
            self.expect(")")
            return InputRead(off, int(w.text, 0))
        if self.accept("icall"):
            return self.icall_rest()
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "name":
            name = self.name()
            if self.at("("):
                return Call(name, self.args())
            return Var(name)
        raise self.error(f"unexpected {t.text or 'end of input'!r} in expression")


def _callees(e: Expr) -> Iterator[str]:
    for sub in iter_exprs(e):
        if isinstance(sub, Call):
            yield sub.func
        elif isinstance(sub, ICall):
            yield from sub.table


def parse_target(text: str) -> Program:
    """Parse target source into a Program with statement ids in source order.

    Raises TargetSyntaxError, DuplicateFunction or UnknownCallee.  Softer
    problems (bad widths, dead code, unknown variables) are left for
    :func:`validate_program`.
    """
    funcs = _Parser(text).program()
    names = set()
    for f in funcs:
        if f.name in names:
            raise DuplicateFunction(f"function {f.name!r} defined twice (line {f.line})")
        names.add(f.name)
    for f in funcs:
        for s in iter_stmts(f.body):
            for e in stmt_exprs(s):
                for callee in _callees(e):
                    if callee not in names:
                        raise UnknownCallee(f"{f.name}: call to undefined function {callee!r}"
                                            f" (line {getattr(s, 'line', 0)})")
    return Program(funcs)


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Issue:
    kind: str  # dead-block | unknown-name | invalid-width | invalid-shift | arity | entry
    function: str
    message: str

    @property
    def is_error(self) -> bool:
        return self.kind != "dead-block"


@dataclass
class ValidationReport:
    issues: list = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.issues)

    def __iter__(self):
        return iter(self.issues)

    def __len__(self):
        return len(self.issues)

    @property
    def errors(self) -> list:
        return [i for i in self.issues if i.is_error]

    @property
    def executable(self) -> bool:
        return not self.errors

    def kinds(self) -> set:
        return {i.kind for i in self.issues}


def validate_program(p: Program) -> ValidationReport:
    """Collect dead blocks, unresolved names, invalid widths and similar problems."""
    rep = ValidationReport()
    add = rep.issues.append
    if not p.has_function(p.entry):
        add(Issue("entry", p.entry, f"no entry function {p.entry!r}"))
    elif p.function(p.entry).params:
        add(Issue("entry", p.entry, "entry function takes no parameters"))
    for f in p.functions:
        declared = set(f.params)
        for s in iter_stmts(f.body):
            if isinstance(s, Let):
                declared.add(s.name)
        for s in iter_stmts(f.body):
            if isinstance(s, Assign) and s.name not in declared:
                add(Issue("unknown-name", f.name, f"assignment to undeclared {s.name!r} (line {s.line})"))
            for e in stmt_exprs(s):
                for sub in iter_exprs(e):
                    if isinstance(sub, Var) and sub.name not in declared:
                        add(Issue("unknown-name", f.name, f"unknown variable {sub.name!r}"))
                    elif isinstance(sub, InputRead) and sub.width not in VALID_WIDTHS:
                        add(Issue("invalid-width", f.name, f"input width {sub.width} not in {VALID_WIDTHS}"))
                    elif (isinstance(sub, BinOp) and sub.op in ("<<", ">>")
                          and isinstance(sub.rhs, Const) and not 0 <= sub.rhs.value < 64):
                        add(Issue("invalid-shift", f.name, f"shift amount {sub.rhs.value} out of range"))
                    elif isinstance(sub, (Call, ICall)):
                        callees = [sub.func] if isinstance(sub, Call) else list(sub.table)
                        for c in callees:
                            if p.has_function(c) and len(p.function(c).params) != len(sub.args):
                                add(Issue("arity", f.name, f"{c} expects {len(p.function(c).params)}"
                                          f" arguments, got {len(sub.args)}"))
        for b in f.cfg.dead_blocks():
            add(Issue("dead-block", f.name, f"block {b} is unreachable"))
    return rep


# --------------------------------------------------------------------------
# pretty-printer


def format_expr(e: Expr) -> str:
    if isinstance(e, Const):
        return str(e.value) if e.value >= 0 else f"(-{-e.value})"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, InputRead):
        return f"in({format_expr(e.offset)}, {e.width})"
    if isinstance(e, Neg):
        return f"(-{format_expr(e.operand)})"
    if isinstance(e, BinOp):
        return f"({format_expr(e.lhs)} {e.op} {format_expr(e.rhs)})"
    if isinstance(e, Call):
        return f"{e.func}({', '.join(map(format_expr, e.args))})"
    if isinstance(e, ICall):
        s = f"icall {format_expr(e.selector)} [{', '.join(e.table)}]"
        return s + f"({', '.join(map(format_expr, e.args))})" if e.args else s
    raise TypeError(e)


def format_cond(c: Cond) -> str:
    if isinstance(c, Cmp):
        return f"{format_expr(c.lhs)} {c.op} {format_expr(c.rhs)}"
    op = "&&" if isinstance(c, And) else "||"
    return f"({format_cond(c.lhs)} {op} {format_cond(c.rhs)})"


def _format_block(stmts: list, depth: int) -> list:
    pad = "    " * depth
    out = []
    for s in stmts:
        if isinstance(s, Let):
            out.append(f"{pad}let {s.name} = {format_expr(s.expr)};")
        elif isinstance(s, Assign):
            out.append(f"{pad}{s.name} = {format_expr(s.expr)};")
        elif isinstance(s, Return):
            out.append(f"{pad}return;" if s.expr is None else f"{pad}return {format_expr(s.expr)};")
        elif isinstance(s, Exit):
            out.append(f"{pad}exit;")
        elif isinstance(s, Abort):
            out.append(f'{pad}abort "{s.tag}";')
        elif isinstance(s, CallStmt):
            kw = "" if isinstance(s.call, ICall) else "call "
            out.append(f"{pad}{kw}{format_expr(s.call)};")
        elif isinstance(s, If):
            out.append(f"{pad}if {format_cond(s.cond)} {{")
            out.extend(_format_block(s.then, depth + 1))
            if s.orelse:
                out.append(f"{pad}}} else {{")
                out.extend(_format_block(s.orelse, depth + 1))
            out.append(f"{pad}}}")
        elif isinstance(s, While):
            out.append(f"{pad}while {format_cond(s.cond)} {{")
            out.extend(_format_block(s.body, depth + 1))
            out.append(f"{pad}}}")
    return out


def format_program(p: Program) -> str:
    parts = []
    for f in p.functions:
        lines = [f"fn {f.name}({', '.join(f.params)}) {{"]
        lines += _format_block(f.body, 1)
        lines.append("}")
        parts.append("\n".join(lines))
    return "\n\n".join(parts) + "\n"
