"""Implicit effective prior detection by dual-run forced replay."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .interp import DEFAULT_STEP_LIMIT, ExecutionResult, ForcePlan, execute
from .ir import Program


class PreconditionViolated(ValueError):
    pass


@dataclass
class ImplicitReport:
    confirmed: list = field(default_factory=list)  # positions on the original trace
    candidates: list = field(default_factory=list)
    executions: int = 0
    verdicts: list = field(default_factory=list)  # (position, confirmed)
    residual_unreachable: Optional[bool] = None

    def __bool__(self) -> bool:
        return bool(self.confirmed)


def detect_implicit_priors(p: Program, original: bytes, mutated: bytes, target, *,
                           explicit: Optional[Iterable[int]] = None,
                           run: Optional[Callable] = None,
                           mutated_result: Optional[ExecutionResult] = None,
                           log: Optional[Callable[[str], None]] = None,
                           verify: bool = False,
                           limit: int = DEFAULT_STEP_LIMIT) -> ImplicitReport:
    """Find guards whose outcome changes, by implicit flow, whether the target is reached.

    ``target`` needs ``stmt`` and ``occurrence``; if it also carries the
    trace of ``original`` (``result``/``input``) that recording is reused.
    ``explicit`` are trace positions of known effective priors (defaults to
    ``target.effective_positions()``).  ``run(data, plan)`` executes the
    program; by default a fresh interpreter run.
    """
    if run is None:
        def run(data, plan=None):
            return execute(p, data, plan, limit)
    rep = ImplicitReport()

    def go(data, plan=None):
        rep.executions += 1
        return run(data, plan)

    r1 = getattr(target, "result", None)
    if r1 is None or getattr(target, "input", None) != bytes(original):
        r1 = go(original)
    pos = r1.find(target.stmt, target.occurrence)
    if pos is None:
        raise PreconditionViolated("target is not reached on the original input")
    rm = mutated_result if mutated_result is not None else go(mutated)
    if rm.find(target.stmt, target.occurrence) is not None:
        raise PreconditionViolated("target is still reached on the mutated input")
    if explicit is None:
        explicit = target.effective_positions()
    explicit = set(explicit)

    recorded = r1.choices()[:pos]
    r2 = go(mutated, ForcePlan.replay(recorded))
    t1, t2 = r1.trace, r2.trace
    for i in range(min(pos, len(t2)) - 1, -1, -1):
        if i in explicit or t2[i].stmt != t1[i].stmt:
            continue
        if t2[i].natural != t1[i].branch_taken:
            rep.candidates.append(i)

    def key(j):
        return (t1[j].stmt, t1[j].occurrence)

    held = {key(j): t1[j].branch_taken for j in explicit}
    for i in rep.candidates:
        forced = {key(j): t1[j].branch_taken for j in range(i)}
        forced.update(held)
        forced.update({key(j): t1[j].branch_taken for j in rep.confirmed})
        r = go(mutated, ForcePlan.listed(forced))
        hit = r.find(target.stmt, target.occurrence) is None
        rep.verdicts.append((i, hit))
        if hit:
            rep.confirmed.append(i)
        if log is not None:
            log(f"implicit candidate {t1[i].stmt}#{t1[i].occurrence} at {i}: "
                f"{'confirmed' if hit else 'rejected'}")

    if verify:
        forced = dict(held)
        forced.update({key(j): t1[j].branch_taken for j in rep.confirmed})
        r = go(mutated, ForcePlan.listed(forced))
        rep.residual_unreachable = r.find(target.stmt, target.occurrence) is None
    return rep
