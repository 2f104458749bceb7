"""Post-dominator trees and prior conditional statements on a trace."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .interp import ExecutionResult
from .ir import CFG, Block, Branch, Call, ICall, Program, Ret, iter_exprs, stmt_exprs


class NodesInDifferentFunctions(ValueError):
    pass


class TargetNotCondStmt(ValueError):
    pass


class PostDomTree:
    """Post-dominance over one CFG, relative to its synthetic exit.

    Only paths that end at the regular exit count; blocks that cannot reach
    it (``exit``/``abort`` dead ends) post-dominate nothing but themselves.
    """

    def __init__(self, cfg: CFG, function: str = ""):
        self.cfg = cfg
        self.function = function
        # nodes with a path to the regular exit
        live = {cfg.exit}
        stack = [cfg.exit]
        while stack:
            b = stack.pop()
            for a in cfg.pred[b]:
                if a not in live:
                    live.add(a)
                    stack.append(a)
        self.live = frozenset(live)
        everything = frozenset(live)
        pdom = {v: (everything if v in live else frozenset((v,))) for v in cfg.nodes()}
        pdom[cfg.exit] = frozenset((cfg.exit,))
        order = _reverse_postorder_from_exit(cfg, live)
        changed = True
        while changed:
            changed = False
            for v in order:
                if v == cfg.exit:
                    continue
                succs = [s for s in cfg.succ[v] if s in live]
                new = frozenset.intersection(*(pdom[s] for s in succs)) | {v}
                if new != pdom[v]:
                    pdom[v] = new
                    changed = True
        self.pdom = pdom
        self.ipdom: dict = {}
        for v in cfg.nodes():
            strict = pdom[v] - {v}
            # the closest strict post-dominator is the one with the largest set
            self.ipdom[v] = max(strict, key=lambda u: len(pdom[u])) if strict else None
        self.root = cfg.exit

    def postdominates(self, a: int, b: int) -> bool:
        return a in self.pdom[b]

    def postdominates_terminator(self, a: int, r: int) -> bool:
        """Does block ``a`` lie on every exit path leaving the terminator of block ``r``?"""
        succs = [s for s in self.cfg.succ[r] if s in self.live]
        if not succs:
            return False
        return all(a in self.pdom[s] for s in succs)

    def children(self, v: int) -> list:
        return [u for u, p in self.ipdom.items() if p == v]


def _reverse_postorder_from_exit(cfg: CFG, live: frozenset) -> list:
    seen, order = set(), []
    stack = [(cfg.exit, iter(cfg.pred[cfg.exit]))]
    seen.add(cfg.exit)
    while stack:
        v, it = stack[-1]
        for u in it:
            if u not in seen and u in live:
                seen.add(u)
                stack.append((u, iter(cfg.pred[u])))
                break
        else:
            stack.pop()
            order.append(v)
    order.reverse()
    return order


def build_postdom_tree(cfg: CFG, function: str = "") -> PostDomTree:
    return PostDomTree(cfg, function)


def postdominates(tree: PostDomTree, a, b) -> bool:
    """``a`` post-dominates ``b``; nodes are block ids or (function, block) pairs."""
    if isinstance(a, tuple) or isinstance(b, tuple):
        fa, a = a if isinstance(a, tuple) else (tree.function, a)
        fb, b = b if isinstance(b, tuple) else (tree.function, b)
        if fa != fb or fa != tree.function:
            raise NodesInDifferentFunctions(f"{fa} vs {fb}")
    return tree.postdominates(a, b)


def build_analyses(p: Program) -> dict:
    """Post-dominator tree for every function, keyed by function name."""
    return {f.name: PostDomTree(f.cfg, f.name) for f in p.functions}


def _block_callees(block: Block) -> set:
    exprs = [e for ins in block.instrs for e in stmt_exprs(ins)]
    t = block.term
    if isinstance(t, Branch):
        exprs += [t.cond.lhs, t.cond.rhs]
    elif isinstance(t, Ret) and t.expr is not None:
        exprs.append(t.expr)
    out = set()
    for e in exprs:
        for sub in iter_exprs(e):
            if isinstance(sub, Call):
                out.add(sub.func)
            elif isinstance(sub, ICall):
                out.update(sub.table)
    return out


def may_exit_functions(p: Program) -> set:
    """Functions from which some call path reaches an ``exit`` or ``abort``."""
    calls = {f.name: set().union(*(_block_callees(b) for b in f.cfg.blocks))
             for f in p.functions}
    out = {f.name for f in p.functions if f.cfg.irregular}
    grew = True
    while grew:
        grew = False
        for f, callees in calls.items():
            if f not in out and callees & out:
                out.add(f)
                grew = True
    return out


def irregular_cond_blocks(p: Program, analyses: dict) -> dict:
    """Per function, the branch blocks with an arm that may end the run abnormally.

    An arm qualifies if, before rejoining at the branch's immediate
    post-dominator, it can reach a block with no path to the regular exit
    or a call into a function that may exit.
    """
    cached = p.__dict__.get("_irregular_conds")
    if cached is not None and cached[0] is analyses:
        return cached[1]
    exiting = may_exit_functions(p)
    out = {}
    for f in p.functions:
        cfg, tree = f.cfg, analyses[f.name]
        risky = {b.id for b in cfg.blocks if _block_callees(b) & exiting}
        flagged = set()
        for r in cfg.cond_block.values():
            join = tree.ipdom[r]
            seen, stack = set(), list(cfg.succ[r])
            while stack:
                v = stack.pop()
                if v == join or v in seen:
                    continue
                seen.add(v)
                if v not in tree.live or v in risky:
                    flagged.add(r)
                    break
                stack.extend(cfg.succ[v])
        out[f.name] = frozenset(flagged)
    p.__dict__["_irregular_conds"] = (analyses, out)
    return out


@dataclass(frozen=True)
class PriorSet:
    """Trace positions of the prior conditional statements of a target."""

    target: int
    positions: tuple  # descending trace order
    memo_key: tuple

    def __iter__(self):
        return iter(self.positions)

    def __len__(self):
        return len(self.positions)

    def __contains__(self, pos):
        return pos in self.positions

    def stmts(self, result: ExecutionResult) -> list:
        return [result.trace[i].stmt for i in self.positions]


class PriorFinder:
    """Prior-statement queries against one execution trace, memoized per position."""

    def __init__(self, program: Program, result: ExecutionResult, analyses: Optional[dict] = None,
                 cache: Optional[dict] = None):
        self.program = program
        self.result = result
        self.analyses = analyses if analyses is not None else build_analyses(program)
        self.cache = cache
        self._loc = {}
        self._irregular = []
        for i, e in enumerate(result.trace):
            fname, blk = self._locate(e.stmt)
            if blk in irregular_cond_blocks(program, self.analyses)[fname]:
                self._irregular.append(i)
        self._imm: dict = {}
        self._memo: dict = {}

    def _locate(self, sid):
        loc = self._loc.get(sid)
        if loc is None:
            loc = self._loc[sid] = self.program.locate(sid)
        return loc

    def immediate(self, pos: int) -> Optional[int]:
        """Nearest prior on the trace: intraprocedural first, then interprocedural."""
        if pos in self._imm:
            return self._imm[pos]
        trace = self.result.trace
        s = trace[pos]
        fname, bs = self._locate(s.stmt)
        tree = self.analyses[fname]
        found = None
        for i in range(pos - 1, -1, -1):
            r = trace[i]
            if r.frame == s.frame and not tree.postdominates_terminator(bs, self._locate(r.stmt)[1]):
                found = i
                break
        if found is None:
            stack = self.result.ancestors(s.frame)
            for i in range(pos - 1, -1, -1):
                r = trace[i]
                child = stack.get(r.frame)
                if child is None:
                    continue
                rf, rb = self._locate(r.stmt)
                call_fn, call_blk = self.result.frames[child].call_site
                if not self.analyses[rf].postdominates_terminator(call_blk, rb):
                    found = i
                    break
        self._imm[pos] = found
        return found

    def _irregular_before(self, pos: int) -> list:
        return [i for i in self._irregular if i < pos]

    def prior_positions(self, pos: int) -> frozenset:
        if pos in self._memo:
            return self._memo[pos]
        need, stack, seen = [], [pos], set()
        while stack:
            p = stack.pop()
            if p in seen or p in self._memo:
                continue
            seen.add(p)
            need.append(p)
            imm = self.immediate(p)
            if imm is not None:
                stack.append(imm)
            stack.extend(self._irregular_before(p))
        for p in sorted(need):
            acc = set()
            imm = self._imm[p]
            if imm is not None:
                acc.add(imm)
                acc |= self._memo[imm]
            for r in self._irregular_before(p):
                acc.add(r)
                acc |= self._memo[r]
            self._memo[p] = frozenset(acc)
        return self._memo[pos]

    def find(self, pos: int) -> PriorSet:
        trace = self.result.trace
        if not 0 <= pos < len(trace):
            raise TargetNotCondStmt(f"trace position {pos} is not a conditional statement")
        key = None
        if self.cache is not None:
            prefix = tuple((e.stmt, e.branch_taken, e.frame) for e in trace[:pos])
            key = (trace[pos].stmt, prefix)
            hit = self.cache.get(key)
            if hit is not None:
                return PriorSet(pos, hit, self._memo_key(pos, hit))
        positions = tuple(sorted(self.prior_positions(pos), reverse=True))
        if key is not None:
            self.cache[key] = positions
        return PriorSet(pos, positions, self._memo_key(pos, positions))

    def _memo_key(self, pos: int, positions: tuple) -> tuple:
        trace = self.result.trace
        return (trace[pos].stmt, tuple((trace[i].stmt, trace[i].branch_taken) for i in positions))


def find_prior_stmts(result: ExecutionResult, target: int, analyses: dict, program: Program,
                     cache: Optional[dict] = None) -> PriorSet:
    """All prior conditional statements of the trace entry at ``target``."""
    return PriorFinder(program, result, analyses, cache).find(target)
