"""Intervals of the open chain, the step order and the case table of the alpha map."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, NamedTuple


@dataclass(frozen=True)
class Interval:
    """Connected set of sites ``{left, ..., left + edges}`` (1-based)."""

    left: int
    edges: int

    def __post_init__(self):
        if self.left < 1 or self.edges < 0:
            raise ValueError(f"inadmissible interval left={self.left} edges={self.edges}")

    @property
    def right(self) -> int:
        return self.left + self.edges

    @property
    def n_sites(self) -> int:
        return self.edges + 1

    def sites(self) -> range:
        return range(self.left, self.right + 1)

    def __contains__(self, site: int) -> bool:
        return self.left <= site <= self.right

    def issubset(self, other: Interval) -> bool:
        return other.left <= self.left and self.right <= other.right

    def is_strict_subset(self, other: Interval) -> bool:
        return self.issubset(other) and self != other

    def intersects(self, other: Interval) -> bool:
        return self.left <= other.right and other.left <= self.right

    def union(self, other: Interval) -> Interval:
        """Smallest interval covering both; only meaningful for intersecting pairs."""
        left = min(self.left, other.left)
        return Interval(left, max(self.right, other.right) - left)

    def fits(self, n: int) -> bool:
        return self.right <= n

    def __repr__(self):
        return f"I({self.edges},{self.left})"


class StepIndex(NamedTuple):
    """Label ``(k, q)`` of one block-diagonalization step.

    Tuple ordering coincides with the step order: longer intervals come later,
    and among equal lengths the left endpoint decides.  The initial label
    ``(0, N)`` has ``k = 0`` and is therefore the minimum.
    """

    k: int
    q: int

    @property
    def interval(self) -> Interval:
        return Interval(self.q, self.k)


class RelationCase(enum.Enum):
    A_I = "a-i"
    A_II = "a-ii"
    A_III = "a-iii"
    B = "b"
    C = "c"
    D1 = "d-1"
    D2 = "d-2"

    @property
    def unchanged(self) -> bool:
        return self in (RelationCase.A_I, RelationCase.A_II, RelationCase.A_III)


def initial_step(n: int) -> StepIndex:
    return StepIndex(0, n)


def is_admissible(step: StepIndex, n: int) -> bool:
    if step == (0, n):
        return True
    return 1 <= step.k <= n - 1 and 1 <= step.q <= n - step.k


def precedes(a: StepIndex, b: StepIndex) -> bool:
    """Strict step order: ``a`` comes before ``b``."""
    return tuple(a) < tuple(b)


def step_sequence(n: int) -> list[StepIndex]:
    if n < 2:
        raise ValueError(f"chain of {n} site(s) has no interaction to block-diagonalize")
    return [StepIndex(k, q) for k in range(1, n) for q in range(1, n - k + 1)]


def predecessor(step: StepIndex, n: int) -> StepIndex:
    if step.k == 0:
        raise ValueError(f"initial step {tuple(step)} has no predecessor")
    if not is_admissible(step, n):
        raise ValueError(f"step {tuple(step)} is not admissible for N={n}")
    if step.q >= 2:
        return StepIndex(step.k, step.q - 1)
    if step.k >= 2:
        return StepIndex(step.k - 1, n - step.k + 1)
    return initial_step(n)


def intervals(n: int, min_edges: int = 0) -> Iterator[Interval]:
    """All intervals of the chain ``{1..n}``, ordered by length then left endpoint."""
    for edges in range(min_edges, n):
        for left in range(1, n - edges + 1):
            yield Interval(left, edges)


def classify(target: Interval, step: Interval) -> RelationCase:
    """Case of the alpha map that governs ``target`` during the step on ``step``."""
    if target.edges <= step.edges - 1:
        return RelationCase.A_I
    if not target.intersects(step):
        return RelationCase.A_II
    if target == step:
        return RelationCase.B
    if step.issubset(target):
        lo, hi = target.left, target.right
        if lo not in step and hi not in step:
            return RelationCase.C
        if lo in step:
            return RelationCase.D1
        return RelationCase.D2
    return RelationCase.A_III


def d_sources(target: Interval, step: Interval, case: RelationCase) -> list[Interval]:
    """Intervals whose conjugation remainders are collected on ``target``.

    Index ``j = 0`` is the target itself, followed by the ``k`` intervals that
    overlap ``step`` without containing it and whose union with it is ``target``.
    """
    k, l, i = step.edges, target.edges, target.left
    if case is RelationCase.D1:
        return [Interval(i + j, l - j) for j in range(k + 1)]
    if case is RelationCase.D2:
        return [Interval(i, l - j) for j in range(k + 1)]
    raise ValueError(f"no source list for case {case}")
