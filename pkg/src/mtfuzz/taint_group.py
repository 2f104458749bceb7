"""Effective prior conditional statements via union-find over input bytes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence


class EmptyTargetTaint(ValueError):
    pass


class UnionFind:
    """Disjoint sets with path compression and union by rank.

    >>> uf = UnionFind()
    >>> uf.union(1, 2); uf.union(3, 4)
    >>> uf.find(2) == uf.find(1), uf.find(1) == uf.find(3)
    (True, False)
    """

    def __init__(self):
        self.parent: dict = {}
        self.rank: dict = {}

    def find(self, x):
        parent = self.parent
        if x not in parent:
            parent[x] = x
            self.rank[x] = 0
            return x
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a, b) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1

    def union_all(self, items: Iterable) -> None:
        it = iter(items)
        first = next(it, None)
        if first is None:
            return
        self.find(first)
        for x in it:
            self.union(first, x)


@dataclass(frozen=True)
class EffectiveSet:
    positions: tuple  # subset of the prior positions, same (reverse trace) order
    groups: UnionFind

    def __iter__(self):
        return iter(self.positions)

    def __len__(self):
        return len(self.positions)

    def __contains__(self, pos):
        return pos in self.positions


def effective_priors(target_bytes: Iterable[int], priors: Sequence[tuple],
                     pick: Optional[Callable] = None) -> EffectiveSet:
    """Select the priors connected to the target through shared input bytes.

    ``priors`` is a sequence of ``(position, byte_offsets)`` in reverse trace
    order.  ``pick`` chooses the representative byte of a label (default:
    the smallest offset); the result does not depend on it.
    """
    target = sorted(set(target_bytes))
    if not target:
        raise EmptyTargetTaint("target has no tainted input bytes")
    pick = pick or min
    uf = UnionFind()
    uf.union_all(target)
    tainted = [(pos, frozenset(label)) for pos, label in priors if label]
    for _, label in tainted:
        uf.union_all(label)
    root = uf.find(pick(target))
    chosen = tuple(pos for pos, label in tainted if uf.find(pick(sorted(label))) == root)
    return EffectiveSet(chosen, uf)
