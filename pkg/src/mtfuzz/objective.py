"""Predicate-to-objective transforms and the rectified joint objective.

A branch constraint ``a CMP b`` (wanting a given outcome) becomes a function
``f`` that is non-positive exactly when the wanted outcome holds.  Python
integers do not overflow, so differences of 64-bit operands are exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .ir import StmtId

EPSILON = 1

_NEGATED = {"<": ">=", "<=": ">", ">": "<=", ">=": "<", "==": "!=", "!=": "=="}


def transform_predicate(cmp: str, a: int, b: int, desired: bool = True) -> int:
    if not desired:
        cmp = _NEGATED[cmp]
    if cmp == "<":
        return a - b + EPSILON
    if cmp == "<=":
        return a - b
    if cmp == ">":
        return b - a + EPSILON
    if cmp == ">=":
        return b - a
    if cmp == "==":
        return abs(a - b)
    if cmp == "!=":
        return -abs(a - b) + EPSILON
    raise ValueError(f"unknown comparison {cmp!r}")


def rectify(f: int) -> int:
    return f if f > 0 else 0


@dataclass(frozen=True)
class ObjectiveTerm:
    stmt: StmtId
    occurrence: int
    desired: bool
    f_value: int

    @property
    def satisfied(self) -> bool:
        return self.f_value <= 0


def joint_objective(terms: Iterable) -> int:
    """Sum of rectified terms; accepts ObjectiveTerms or raw f values."""
    total = 0
    for t in terms:
        total += rectify(t.f_value if isinstance(t, ObjectiveTerm) else t)
    return total


@dataclass(frozen=True)
class JointObjective:
    terms: tuple

    @property
    def g_value(self) -> int:
        return joint_objective(self.terms)
