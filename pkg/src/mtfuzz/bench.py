"""Built-in benchmark targets, a random target generator and brute-force oracles.

The oracles here are deliberately naive: they define ground truth for the
analyses by enumeration and forced execution, never by reusing them.
"""

from __future__ import annotations

import itertools
import json
import random
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Optional, Sequence

from .interp import DEFAULT_STEP_LIMIT, ExecutionResult, ForcePlan, execute
from .ir import (CFG, Abort, Exit, Program, StmtId, While, iter_exprs, iter_stmts,
                 parse_target, stmt_exprs, validate_program)
from .ir import Call, ICall

FIXTURE_NAMES = ("nested_foo", "crc_gate", "implicit_k", "unsat_alpha", "interproc_gate",
                 "irregular_exit")


class BoundTooLarge(ValueError):
    pass


class CyclicProgramUnsupported(ValueError):
    pass


# --------------------------------------------------------------------------
# fixtures


@dataclass(frozen=True)
class DesignatedTarget:
    stmt: str
    branch: bool
    priors: Optional[tuple] = None  # StmtId strings, as found on the seed's trace
    effective: Optional[tuple] = None
    implicit: Optional[tuple] = None
    solvable: Optional[bool] = None
    seed: int = 0
    provenance: str = ""


@dataclass(frozen=True)
class FixtureSpec:
    name: str
    source: str
    seeds: tuple
    input_length: int
    designated: tuple = ()
    solvable_edges: tuple = ()  # (stmt, branch) pairs a campaign must cover
    abort_reachable: Optional[bool] = None
    irregular: bool = False
    implicit_flows: bool = False  # priors hidden from explicit taint are expected
    notes: str = ""

    def program(self) -> Program:
        return parse_target(self.source)


def _fixture_text(name: str, ext: str) -> str:
    return resources.files("mtfuzz").joinpath("fixtures", f"{name}.{ext}").read_text("utf-8")


def load_fixture(name: str) -> FixtureSpec:
    meta = json.loads(_fixture_text(name, "json"))
    designated = tuple(
        DesignatedTarget(d["stmt"], d["branch"],
                         tuple(d["priors"]) if "priors" in d else None,
                         tuple(d["effective"]) if "effective" in d else None,
                         tuple(d["implicit"]) if "implicit" in d else None,
                         d.get("solvable"), d.get("seed", 0), d.get("provenance", ""))
        for d in meta.get("designated", []))
    return FixtureSpec(
        name=name,
        source=_fixture_text(name, "mtt"),
        seeds=tuple(bytes(s) for s in meta["seeds"]),
        input_length=meta["input_length"],
        designated=designated,
        solvable_edges=tuple((e[0], bool(e[1])) for e in meta.get("solvable_edges", [])),
        abort_reachable=meta.get("abort_reachable"),
        irregular=meta.get("irregular", False),
        implicit_flows=meta.get("implicit_flows", False),
        notes=meta.get("notes", ""),
    )


def builtin_targets() -> list:
    return [load_fixture(n) for n in FIXTURE_NAMES]


def fixture_path(name: str):
    return resources.files("mtfuzz").joinpath("fixtures", f"{name}.mtt")


# --------------------------------------------------------------------------
# brute-force solving


def brute_force_solve(p: Program, stmt: StmtId, branch: bool, length: int,
                      positions: Optional[Sequence[int]] = None, base: Optional[bytes] = None,
                      samples: Optional[int] = None, rng_seed: int = 0,
                      limit: int = DEFAULT_STEP_LIMIT) -> Optional[bytes]:
    """First input whose unforced run takes ``branch`` at ``stmt``.

    Exhaustive mode enumerates every value of the bytes at ``positions``
    (default: all ``length`` bytes) on top of ``base`` (default zeros), in
    lexicographic order starting from all zeros.  At most 4 positions.
    With ``samples`` set, tries that many random inputs instead (the first
    being ``base``).  None means no witness within the bound.
    """
    base = bytearray(base if base is not None else bytes(length))
    if len(base) != length:
        raise ValueError("base length differs from length")
    positions = list(range(length)) if positions is None else list(positions)

    def hit(data) -> bool:
        r = execute(p, bytes(data), None, limit)
        return any(e.stmt == stmt and e.branch_taken == branch for e in r.trace)

    if samples is not None:
        rng = random.Random(rng_seed)
        cand = bytearray(base)
        for k in range(samples):
            if k:
                for i in positions:
                    cand[i] = rng.randrange(256)
            if hit(cand):
                return bytes(cand)
        return None
    if len(positions) > 4:
        raise BoundTooLarge(f"{len(positions)} bytes exceed the exhaustive cap of 4")
    cand = bytearray(base)
    for values in itertools.product(range(256), repeat=len(positions)):
        for i, v in zip(positions, values):
            cand[i] = v
        if hit(cand):
            return bytes(cand)
    return None


# --------------------------------------------------------------------------
# prior-statement oracle


def _callees(p: Program, fname: str) -> set:
    out = set()
    for s in iter_stmts(p.function(fname).body):
        for e in stmt_exprs(s):
            for sub in iter_exprs(e):
                if isinstance(sub, Call):
                    out.add(sub.func)
                elif isinstance(sub, ICall):
                    out.update(sub.table)
    return out


def is_acyclic(p: Program) -> bool:
    """No loops and no recursion through direct or indirect calls."""
    for f in p.functions:
        if any(isinstance(s, While) for s in iter_stmts(f.body)):
            return False
    graph = {f.name: _callees(p, f.name) for f in p.functions}
    state: dict = {}

    def visit(v) -> bool:
        state[v] = 1
        for w in graph[v]:
            if state.get(w) == 1 or (w not in state and not visit(w)):
                return False
        state[v] = 2
        return True

    return all(visit(f.name) for f in p.functions if f.name not in state)


def has_irregular(p: Program) -> bool:
    return any(isinstance(s, (Exit, Abort)) for f in p.functions for s in iter_stmts(f.body))


def oracle_priors(p: Program, result: ExecutionResult, target, data: bytes,
                  limit: int = DEFAULT_STEP_LIMIT) -> tuple:
    """Prior positions by definition: earlier statements whose flip loses the target.

    For each earlier statement on the trace, rerun ``data`` with every
    statement before it held and that one flipped; later statements run
    naturally.  ``target`` is a trace position or a (StmtId, occurrence)
    pair.  Returns positions in descending trace order.
    """
    if not is_acyclic(p):
        raise CyclicProgramUnsupported("the prior oracle needs loop- and recursion-free programs")
    tr = result.trace
    pos = target if isinstance(target, int) else result.find(*target)
    if pos is None or not 0 <= pos < len(tr):
        raise ValueError("target is not on the trace")
    goal = (tr[pos].stmt, tr[pos].occurrence)
    out = []
    for i in range(pos):
        plan = {(tr[j].stmt, tr[j].occurrence): tr[j].branch_taken for j in range(i)}
        plan[(tr[i].stmt, tr[i].occurrence)] = not tr[i].branch_taken
        r = execute(p, data, ForcePlan.listed(plan), limit)
        if r.find(*goal) is None:
            out.append(i)
    return tuple(sorted(out, reverse=True))


# --------------------------------------------------------------------------
# post-dominance oracle


def random_cfg(rng: random.Random, max_blocks: int = 12) -> CFG:
    """Random graph of 1..max_blocks blocks; loops, dead ends and unreachable blocks allowed."""
    n = rng.randint(1, max_blocks)
    edges, returns, irregular = {}, set(), set()
    for i in range(n):
        kind = rng.random()
        if kind < 0.15:
            returns.add(i)
        elif kind < 0.22:
            irregular.add(i)
        else:
            k = rng.choice((1, 2, 2))
            edges[i] = rng.sample(range(n), min(k, n))
    if not returns:
        returns.add(rng.randrange(n))
        edges.pop(next(iter(returns)), None)
        irregular -= returns
    return CFG.from_edges(n, edges, returns, irregular)


def pdom_by_paths(cfg: CFG) -> dict:
    """Post-dominator sets from the intersection of all simple paths to the exit."""
    out = {}
    for b in cfg.nodes():
        common = None
        stack = [(b, [b])]
        while stack:
            v, path = stack.pop()
            if v == cfg.exit:
                s = set(path)
                common = s if common is None else common & s
                continue
            for w in cfg.succ[v]:
                if w not in path:
                    stack.append((w, path + [w]))
        out[b] = frozenset(common) if common is not None else frozenset((b,))
    return out


# --------------------------------------------------------------------------
# effective-prior oracle


def closure_effective(target_bytes: Iterable[int], priors: Sequence[tuple]) -> tuple:
    """Priors reachable from the target through chains of shared bytes."""
    reach = set(target_bytes)
    chosen: set = set()
    grew = True
    while grew:
        grew = False
        for pos, label in priors:
            if pos not in chosen and set(label) & reach:
                chosen.add(pos)
                reach |= set(label)
                grew = True
    return tuple(pos for pos, _ in priors if pos in chosen)


def random_labels(rng: random.Random, width: int = 8, max_priors: int = 10):
    """A non-empty target label and a list of (position, label) priors, some empty."""
    target = frozenset(rng.sample(range(width), rng.randint(1, 3)))
    priors = []
    for pos in range(rng.randint(0, max_priors), 0, -1):
        k = rng.choice((0, 1, 1, 2, 3))
        priors.append((pos, frozenset(rng.sample(range(width), k))))
    return target, priors


# --------------------------------------------------------------------------
# random targets


@dataclass(frozen=True)
class RandomLimits:
    functions: int = 3
    conds: int = 12
    input_len: int = 8

    def check(self) -> None:
        if not 1 <= self.functions <= 3:
            raise ValueError("functions must be within 1..3")
        if not 0 <= self.conds <= 12:
            raise ValueError("cond stmts must be within 0..12")
        if not 1 <= self.input_len <= 8:
            raise ValueError("input length must be within 1..8")


_CMPS = ("<", "<=", ">", ">=", "==", "!=")


@dataclass
class _Fn:
    name: str
    params: list
    callees: list = field(default_factory=list)
    conds: int = 0


class _Gen:
    """Structured, loop-free programs whose prior sets are exact by construction.

    Each function is called once (a call tree towards later functions);
    locals are bound at the top and only a sink variable is reassigned, so
    no branch influences later predicates through data.  ``return`` and
    ``exit`` only form top-level guards and ``abort`` ends a body.
    """

    def __init__(self, seed: int, limits: RandomLimits):
        self.rng = random.Random(seed)
        self.lim = limits
        self.tags = 0

    def run(self) -> str:
        rng, lim = self.rng, self.lim
        nf = rng.randint(1, lim.functions)
        fns = [_Fn("main", [])]
        for i in range(1, nf):
            fns.append(_Fn(f"f{i}", [f"p{j}" for j in range(rng.randint(0, 2))]))
            fns[rng.randrange(i)].callees.append(i)
        total = rng.randint(min(1, lim.conds), lim.conds)
        for _ in range(total):
            fns[rng.randrange(nf)].conds += 1
        return "\n".join(self.function(f, fns) for f in fns)

    def read(self) -> str:
        return f"in({self.rng.randrange(self.lim.input_len)}, 1)"

    def expr(self, names: list, depth: int = 0) -> str:
        rng = self.rng
        leaves = [self.read] * 3 + ([lambda: rng.choice(names)] * 2 if names else [])
        if depth >= 2 or rng.random() < 0.5:
            return rng.choice(leaves)()
        op = rng.choice(("+", "-", "*", "&", "|", "^", ">>"))
        lhs = self.expr(names, depth + 1)
        if op == ">>":
            return f"({lhs} >> {rng.randint(1, 3)})"
        if op == "*":
            return f"({lhs} * {rng.randint(2, 5)})"
        rhs = self.expr(names, depth + 1) if rng.random() < 0.5 else str(rng.randint(0, 40))
        return f"({lhs} {op} {rhs})"

    def cond(self, names: list) -> str:
        rhs = str(self.rng.randint(0, 200)) if self.rng.random() < 0.7 else self.expr(names, 1)
        return f"{self.expr(names)} {self.rng.choice(_CMPS)} {rhs}"

    def function(self, f: _Fn, fns: list) -> str:
        rng = self.rng
        names = list(f.params)
        lines = [f"fn {f.name}({', '.join(f.params)}) {{"]
        for k in range(rng.randint(0, 2)):
            lines.append(f"    let v{k} = {self.expr(names)};")
            names.append(f"v{k}")
        lines.append("    let acc = 0;")
        state = {"conds": f.conds, "calls": [fns[i] for i in f.callees]}
        lines += self.body(state, names, 1, top=True)
        for callee in state["calls"]:
            lines.append("    " + self.call(callee, names))
        lines.append("}")
        return "\n".join(lines) + "\n"

    def call(self, callee: _Fn, names: list) -> str:
        args = ", ".join(self.expr(names) for _ in callee.params)
        return f"call {callee.name}({args});"

    def body(self, state: dict, names: list, depth: int, top: bool = False) -> list:
        rng = self.rng
        pad = "    " * depth
        out = []
        items = rng.randint(1, 4) if top else rng.randint(0, 3)
        for _ in range(items):
            r = rng.random()
            if state["conds"] and r < 0.55:
                state["conds"] -= 1
                c = self.cond(names)
                if top and rng.random() < 0.2:
                    end = rng.choice(("return;", "return;", "exit;", 'abort "g";'))
                    if end.startswith("abort"):
                        self.tags += 1
                        end = f'abort "t{self.tags}";'
                    out.append(f"{pad}if {c} {{ {end} }}")
                    continue
                out.append(f"{pad}if {c} {{")
                out += self.body(state, names, depth + 1)
                if rng.random() < 0.3:
                    out.append(f"{pad}}} else {{")
                    out += self.body(state, names, depth + 1)
                out.append(f"{pad}}}")
            elif state["calls"] and r < 0.75:
                out.append(pad + self.call(state["calls"].pop(0), names))
            else:
                out.append(f"{pad}acc = acc + {self.expr(names)};")
        if top:
            while state["conds"]:
                out += self.body(state, names, depth)
        elif rng.random() < 0.1:
            self.tags += 1
            out.append(f'{pad}abort "t{self.tags}";')
        return out


def gen_random_target(seed: int, limits: Optional[RandomLimits] = None) -> str:
    """Deterministic random target text for ``seed``; always parses and validates."""
    limits = limits or RandomLimits()
    limits.check()
    text = _Gen(seed, limits).run()
    report = validate_program(parse_target(text))
    if not report.executable:
        raise AssertionError(f"generator produced an invalid program: {report.errors}")
    return text


def random_input(rng: random.Random, length: int) -> bytes:
    return bytes(rng.randrange(256) for _ in range(length))


__all__ = [
    "BoundTooLarge", "CyclicProgramUnsupported", "DesignatedTarget", "FIXTURE_NAMES",
    "FixtureSpec", "RandomLimits", "brute_force_solve", "builtin_targets", "closure_effective",
    "fixture_path", "gen_random_target", "has_irregular", "is_acyclic", "load_fixture",
    "oracle_priors", "pdom_by_paths", "random_cfg", "random_input", "random_labels",
]
