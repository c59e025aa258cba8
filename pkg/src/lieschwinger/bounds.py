"""Analytic estimates for the effective potentials and the per-step series.

``bound_E(r, i, k, q, t)`` is the a-priori bound on the weighted norm of the
potential on ``I_{r,i}`` after step ``(k, q)``.  It is a product of a
combinatorial prefactor ``Z``, a growth factor collecting the ``(1 + t^{s/4})``
contributions of earlier lengths, a doubling ``2^chi`` once the interval has
been block-diagonalized, and the smallness ``t^{(r-1)/3}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .intervals import Interval, StepIndex, initial_step, intervals, precedes, step_sequence

DEFAULT_GAP = 0.5


# -- combinatorial factors ----------------------------------------------------


def factor_z(r: int, k: int, shift: int) -> int:
    """Endpoint weight ``z`` in {0, 1, 2} as a function of ``shift = q - i``."""
    if r == k or shift < 0:
        return 0
    return 1 if shift < r - k else 2


def factor_Z(r: int, i: int, k: int, q: int) -> float:
    if not 1 <= k <= r:
        raise ValueError(f"factor_Z needs 1 <= k <= r, got k={k}, r={r}")
    total = sum(2.0 / ((r - l) ** 2 * l ** 2) for l in range(1, k))
    if r != k:
        total += factor_z(r, k, q - i) / ((r - k) ** 2 * k ** 2)
    return total


def factor_gf(r: int, k: int, q: int, i: int) -> tuple[int, int]:
    if not 1 <= k <= r:
        raise ValueError(f"factor_gf needs 1 <= k <= r, got k={k}, r={r}")
    g = k - 1
    gap, shift = r - k, q - i
    if gap <= 1 or shift <= 0:
        f = 0
    elif shift <= gap - 2:
        f = shift
    else:
        f = gap - 1
    return g, f


def factor_chi(r: int, k: int, q: int, i: int) -> int:
    if k > r:
        raise ValueError("chi is only defined for k <= r")
    return 1 if r == k and q >= i else 0


def freeze_step(r: int, i: int, step: StepIndex) -> StepIndex:
    """The bound on ``I_{r,i}`` stops changing after step ``(r, i + 1)``."""
    last = StepIndex(r, i + 1)
    return last if precedes(last, step) else step


def raw_bound_E(r: int, i: int, k: int, q: int, t: float) -> float:
    """Closed formula without freezing (requires ``k <= r``)."""
    if r < 1:
        raise ValueError("bounds are defined for intervals with at least one edge")
    if k == 0:
        return 1.0 if r == 1 else 0.0
    chi = factor_chi(r, k, q, i)
    if r == 1:
        return float(2 ** chi)
    small = t ** ((r - 1) / 3)
    z = factor_Z(r, i, k, q)
    if r == 2:
        return z * 2 ** chi * small
    g, f = factor_gf(r, k, q, i)
    growth = 1.0
    for s in range(1, g + 1):
        growth *= (1.0 + t ** (s / 4)) ** (r - s - 1)
    growth *= (1.0 + t ** (k / 4)) ** f
    return z * growth * 2 ** chi * small


def bound_E(r: int, i: int, k: int, q: int, t: float) -> float:
    k, q = freeze_step(r, i, StepIndex(k, q))
    return raw_bound_E(r, i, k, q, t)


def target_bound(r: int, t: float) -> float:
    """The smallness ``t^{(r-1)/4}`` the ledger is supposed to fit under."""
    return t ** ((r - 1) / 4)


@dataclass
class BoundTable:
    """Ledger values for every interval of positive length and every step of the sweep."""

    n: int
    t: float
    values: dict[tuple[Interval, StepIndex], float] = field(default_factory=dict)
    frozen: dict[tuple[Interval, StepIndex], bool] = field(default_factory=dict)

    @classmethod
    def build(cls, n: int, t: float) -> BoundTable:
        table = cls(n, t)
        steps = [initial_step(n)] + step_sequence(n)
        for iv in intervals(n, min_edges=1):
            for step in steps:
                key = (iv, step)
                table.frozen[key] = freeze_step(iv.edges, iv.left, step) != step
                table.values[key] = bound_E(iv.edges, iv.left, step.k, step.q, t)
        return table

    def value(self, interval: Interval, step: StepIndex) -> float:
        return self.values[(interval, step)]

    def rows(self):
        for (iv, step), value in sorted(self.values.items(),
                                        key=lambda kv: (kv[0][0].edges, kv[0][0].left, kv[0][1])):
            yield {
                "r": iv.edges, "i": iv.left, "k": step.k, "q": step.q,
                "bound": value, "target": target_bound(iv.edges, self.t),
                "frozen": self.frozen[(iv, step)],
            }

    def worst_absorption(self) -> float:
        """``min(t^{(r-1)/4} - bound)`` over the table; negative means the absorption fails."""
        return min(target_bound(iv.edges, self.t) - v for (iv, _), v in self.values.items())


def absorption_threshold(n: int, grid: Iterable[float], min_length: int = 1) -> Optional[float]:
    """Largest grid value at which every ledger entry with ``r >= min_length`` fits under ``t^{(r-1)/4}``."""
    best = None
    for t in sorted(grid):
        table = BoundTable.build(n, t)
        ok = all(target_bound(iv.edges, t) - v >= 0.0
                 for (iv, _), v in table.values.items() if iv.edges >= min_length)
        if ok:
            best = t
    return best


# -- series constants ---------------------------------------------------------


def a_equation(a: float, c: float) -> float:
    x = 2.0 * c * a
    em1 = math.expm1(x)
    return em1 + (em1 - x) / a - 1.0


def solve_a(c: float) -> float:
    """Positive root of the a-equation for the constant ``c``."""
    if not c > 0:
        raise ValueError("c must be positive")
    hi = 1.0
    if a_equation(hi, c) <= 0:
        raise ArithmeticError(f"a-equation has no sign change on (0, 1] for c={c}")
    lo = 1e-300
    root = brentq(a_equation, lo, hi, args=(c,), xtol=1e-300, rtol=4 * np.finfo(float).eps,
                  maxiter=500)
    return float(root)


@dataclass(frozen=True)
class BoundParams:
    t: float
    delta: float = DEFAULT_GAP

    @property
    def c(self) -> float:
        return (2.0 + math.sqrt(2.0)) / self.delta

    @property
    def a(self) -> float:
        return solve_a(self.c)

    @property
    def radius(self) -> float:
        """Lower bound ``a/4`` on the convergence radius for unit-bounded potentials."""
        return self.a / 4.0


def b_coefficients(v_norm: float, a: float, count: int) -> list[float]:
    """``B_1 .. B_count`` of the majorant recursion."""
    if not v_norm > 0:
        raise ValueError("the recursion is seeded by a positive norm")
    b = [float(v_norm)]
    for j in range(2, count + 1):
        b.append(sum(b[j - m - 1] * b[m - 1] for m in range(1, j)) / a)
    return b


def radius_bound(v_norm: float, a: float) -> float:
    return a / (4.0 * v_norm)


def v_bound_from_b(b: Sequence[float], v_norm: float, a: float, c: float, j: int) -> float:
    """Majorant of ``||V_j||`` (``j >= 2``) in terms of ``B_j`` and ``B_{j-1}``."""
    if j < 2:
        raise ValueError("the majorant is stated for j >= 2")
    x = 2.0 * c * a
    return b[j - 1] * (math.expm1(x) - x) / a + 2.0 * v_norm * b[j - 2] * math.expm1(x) / a


def gap_prefactor(t: float) -> float:
    """``1 - 8t - 4t sum_{l>=3} l t^{(l-2)/4}`` with the tail summed in closed form."""
    if t == 0:
        return 1.0
    u = t ** 0.25
    if not u < 1.0:
        raise ValueError("the prefactor series needs t < 1")
    tail = u / (1.0 - u) ** 2 + 2.0 * u / (1.0 - u)
    return 1.0 - 8.0 * t - 4.0 * t * tail


# -- checks against measured norms --------------------------------------------


@dataclass
class S1Row:
    interval: Interval
    measured: float
    bound: float
    target: float


@dataclass
class S1Report:
    step: StepIndex
    t: float
    rows: list[S1Row]

    @property
    def ledger_margin(self) -> float:
        """``min(bound - measured)``."""
        return min((r.bound - r.measured for r in self.rows), default=math.inf)

    @property
    def target_margin(self) -> float:
        """``min(t^{(r-1)/4} - measured)``."""
        return min((r.target - r.measured for r in self.rows), default=math.inf)

    @property
    def absorption_margin(self) -> float:
        """``min(t^{(r-1)/4} - bound)``."""
        return min((r.target - r.bound for r in self.rows), default=math.inf)

    def violations(self, kind: str) -> list[S1Row]:
        if kind == "ledger":
            return [r for r in self.rows if r.measured > r.bound]
        if kind == "target":
            return [r for r in self.rows if r.measured > r.target]
        if kind == "absorption":
            return [r for r in self.rows if r.bound > r.target]
        raise ValueError(kind)


def check_S1(table, step: Optional[StepIndex] = None, t: Optional[float] = None) -> S1Report:
    """Compare every potential of ``table`` (absent ones count as zero) with its ledger bound."""
    n = table.chain.n
    t = table.chain.t if t is None else t
    step = table.current_step if step is None else step
    rows = []
    for iv in intervals(n, min_edges=1):
        rows.append(S1Row(iv, table.weighted_norm(iv),
                          bound_E(iv.edges, iv.left, step.k, step.q, t),
                          target_bound(iv.edges, t)))
    return S1Report(step, t, rows)


@dataclass
class SeriesBoundReport:
    """Per-order comparison of a step's series with the majorants."""

    v_norm: float
    b: list[float]
    b_margin: float
    b_formula_margin: float
    s_margin: float
    s_weighted_margin: float
    diag_margin: float
    radius: float


def check_series(v_norms: Sequence[float], v_diag_norms: Sequence[float],
                 s_norms: Sequence[float], s_weighted_norms: Sequence[float],
                 params: BoundParams) -> SeriesBoundReport:
    """Margins (bound minus measured, minimum over orders) of the per-order estimates.

    ``v_norms[j-1]`` is the weighted norm of the order-``j`` potential; the
    majorant recursion is seeded by ``v_norms[0]``.  With a zero seed all
    orders vanish and every margin is reported as infinite.
    """
    inf = math.inf
    v = float(v_norms[0])
    gap = params.delta
    s_margin = min(2 * math.sqrt(2) / gap * vn - sn for vn, sn in zip(v_norms, s_norms))
    sw_margin = min(params.c * vn - sn for vn, sn in zip(v_norms, s_weighted_norms))
    diag_margin = min(vn - dn for vn, dn in zip(v_norms, v_diag_norms))
    if v == 0.0:
        return SeriesBoundReport(0.0, [], inf, inf, s_margin, sw_margin, diag_margin, inf)
    a, c = params.a, params.c
    b = b_coefficients(v, a, len(v_norms))
    b_margin = min(bj - vn for bj, vn in zip(b, v_norms))
    formula_margin = min((v_bound_from_b(b, v, a, c, j) - v_norms[j - 1]
                          for j in range(2, len(v_norms) + 1)), default=inf)
    return SeriesBoundReport(v, b, b_margin, formula_margin, s_margin, sw_margin,
                             diag_margin, radius_bound(v, a))
