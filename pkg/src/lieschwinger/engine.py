"""Local Lie-Schwinger conjugations and the effective-potential update.

One step ``(k, q)`` block-diagonalizes the potential on ``I_{k,q}`` with
respect to the vacuum projector of that interval.  The unperturbed operator
``G`` collects the on-site terms and every (already block-diagonal) potential
strictly inside the interval; the generator ``S = sum_j t^j S_j`` is built
order by order, and the remaining potentials are updated case by case.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .intervals import (
    Interval,
    RelationCase,
    StepIndex,
    classify,
    d_sources,
    initial_step,
    intervals,
    precedes,
    step_sequence,
)
from .operators import (
    ChainSpec,
    LocalOperator,
    OnSiteSpace,
    block_diagonal_part,
    embed_matrix,
    h0_diag,
    hermitian_norm,
    spectral_norm,
    vacuum_index,
    weighted_off_block_norm,
    weights,
)

log = logging.getLogger(__name__)

GAP_FLOOR = 1e-10
DIVERGENCE_CAP = 1e8


class SweepError(RuntimeError):
    """A step could not be carried out; ``records`` holds the partial log."""

    def __init__(self, message: str, step: Optional[StepIndex] = None):
        super().__init__(message)
        self.step = step
        self.records: list[StepRecord] = []
        self.table: Optional[PotentialTable] = None


class GapCollapse(SweepError):
    pass


class SeriesDivergence(SweepError):
    pass


class InvariantViolation(SweepError):
    pass


@dataclass(frozen=True)
class Tolerances:
    tol_series: float = 1e-12
    tol_offdiag: float = 1e-10
    tol_psd: float = 1e-9
    tol_spectrum: float = 1e-8
    max_order: int = 64
    prune: float = 1e-14

    def __post_init__(self):
        for name in ("tol_series", "tol_offdiag", "tol_psd", "tol_spectrum", "prune"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_order < 1:
            raise ValueError("max_order must be >= 1")


@dataclass
class PotentialTable:
    """Effective potentials ``V^{(k,q)}_I`` keyed by interval.

    Length-zero entries hold the on-site Hamiltonians and never change.  Absent
    intervals carry a zero potential.  ``norms`` caches weighted norms and is
    carried over for entries that a step leaves untouched.
    """

    chain: ChainSpec
    current_step: StepIndex
    entries: dict[Interval, LocalOperator]
    norms: dict[Interval, float] = field(default_factory=dict, repr=False)

    @property
    def site(self) -> OnSiteSpace:
        return self.chain.site

    def get(self, interval: Interval) -> Optional[LocalOperator]:
        return self.entries.get(interval)

    def potentials(self):
        """Entries of positive length, in step order."""
        return sorted(((iv, op) for iv, op in self.entries.items() if iv.edges >= 1),
                      key=lambda item: (item[0].edges, item[0].left))

    def weighted_norm(self, interval: Interval) -> float:
        if interval not in self.norms:
            op = self.entries.get(interval)
            if op is None:
                return 0.0
            w = weights(interval, self.site)
            self.norms[interval] = hermitian_norm(w[:, None] * op.matrix * w[None, :])
        return self.norms[interval]

    def coefficient(self, interval: Interval, t: float) -> float:
        return 1.0 if interval.edges == 0 else t


def initial_table(chain: ChainSpec, bonds: dict[Interval, np.ndarray]) -> PotentialTable:
    """Table at the initial label ``(0, N)``: on-site terms plus the given bonds."""
    site = chain.site
    entries: dict[Interval, LocalOperator] = {}
    for i in range(1, chain.n + 1):
        entries[Interval(i, 0)] = LocalOperator(Interval(i, 0), site.hamiltonian)
    for interval, m in bonds.items():
        if not interval.fits(chain.n):
            raise ValueError(f"{interval} does not fit a chain of {chain.n} sites")
        op = LocalOperator(interval, np.asarray(m))
        if not op.is_hermitian():
            raise ValueError(f"potential on {interval} is not Hermitian")
        entries[interval] = op
    return PotentialTable(chain, initial_step(chain.n), entries)


def assemble(table: PotentialTable, t: float, target: Optional[Interval] = None,
             strict: bool = False) -> np.ndarray:
    """Sum of the table entries supported in ``target`` (whole chain by default).

    With ``strict`` the entry on ``target`` itself is left out.
    """
    target = table.chain.full if target is None else target
    d = table.site.dim
    out = np.zeros((d ** target.n_sites,) * 2,
                   dtype=np.result_type(*(op.matrix for op in table.entries.values())))
    for interval, op in table.entries.items():
        if not interval.issubset(target) or (strict and interval == target):
            continue
        c = table.coefficient(interval, t)
        if c == 0.0:
            continue
        out += c * embed_matrix(op.matrix, interval, target, d)
    return out


# -- one step -----------------------------------------------------------------


@dataclass
class LocalProblem:
    """Everything a step needs on ``I_{k,q}``, computed once per step."""

    step: StepIndex
    site: OnSiteSpace
    t: float
    G: np.ndarray
    E: float
    V: np.ndarray
    vac: int
    plus: np.ndarray
    plus_eigvals: np.ndarray
    plus_eigvecs: np.ndarray

    @property
    def interval(self) -> Interval:
        return self.step.interval

    @property
    def gap(self) -> float:
        return float(self.plus_eigvals.min() - self.E)

    def resolve(self, y: np.ndarray) -> np.ndarray:
        """``(G - E)^{-1}`` on ``ran P+`` applied to a vector given on that block."""
        q = self.plus_eigvecs
        return q @ ((q.conj().T @ y) / (self.plus_eigvals - self.E))


def local_G(table: PotentialTable, step: StepIndex, t: Optional[float] = None,
            tol_offdiag: float = Tolerances.tol_offdiag) -> LocalOperator:
    t = table.chain.t if t is None else t
    interval = step.interval
    g = assemble(table, t, interval, strict=True)
    op = LocalOperator(interval, g)
    residual = weighted_off_block_norm(op, table.site)
    if residual > tol_offdiag:
        raise InvariantViolation(
            f"G on {interval} is not block-diagonal (residual {residual:.3e})", step)
    return op


def ground_value_E(table: PotentialTable, step: StepIndex, t: Optional[float] = None) -> float:
    t = table.chain.t if t is None else t
    interval = step.interval
    total = 0.0
    for iv, op in table.entries.items():
        if iv.edges >= 1 and iv.is_strict_subset(interval):
            idx = vacuum_index(iv, table.site)
            total += float(np.real(op.matrix[idx, idx]))
    return t * total


def local_problem(table: PotentialTable, step: StepIndex, t: Optional[float] = None,
                  tol_offdiag: float = Tolerances.tol_offdiag) -> LocalProblem:
    t = table.chain.t if t is None else t
    site = table.site
    interval = step.interval
    G = local_G(table, step, t, tol_offdiag).matrix
    E = ground_value_E(table, step, t)
    vop = table.get(interval)
    V = np.zeros_like(G) if vop is None else vop.matrix
    vac = vacuum_index(interval, site)
    plus = np.delete(np.arange(G.shape[0]), vac)
    lam, vecs = np.linalg.eigh(G[np.ix_(plus, plus)])
    if lam.min() - E <= GAP_FLOOR:
        raise GapCollapse(
            f"G on {interval} has no gap above E={E:.6g} (min P+ eigenvalue {lam.min():.6g})",
            step)
    return LocalProblem(step, site, t, G, E, V, vac, plus, lam, vecs)


@dataclass
class SeriesTerm:
    """Order-``j`` coefficients: generator ``s``, potential ``v`` and its diagonal part."""

    order: int
    s: np.ndarray
    v: np.ndarray
    v_diag: np.ndarray
    s_vector: np.ndarray = field(repr=False)


def _ad_rank2(u: np.ndarray, vac: int, x: np.ndarray) -> np.ndarray:
    """``[S, X]`` for ``S = u e_vac^* - e_vac u^*`` with ``u[vac] == 0``."""
    uc = u.conj()
    out = np.outer(u, x[vac, :]) + np.outer(x[:, vac], uc)
    out[vac, :] -= uc @ x
    out[:, vac] -= x @ u
    return out


def _rank2_matrix(u: np.ndarray, vac: int) -> np.ndarray:
    s = np.zeros((u.size, u.size), dtype=u.dtype)
    s[:, vac] = u
    s[vac, :] = -u.conj()
    return s


def _off_diagonal(x: np.ndarray, vac: int) -> np.ndarray:
    return x - block_diagonal_part(x, vac)


def series_terms(problem: LocalProblem, tol_series: float = Tolerances.tol_series,
                 max_order: int = Tolerances.max_order) -> list[SeriesTerm]:
    """Orders ``(S)_j, (V)_j`` until both are negligible at coupling ``t``.

    Nested commutators are accumulated over compositions of ``j`` by dynamic
    programming; the innermost commutator with ``G`` uses the closed form
    ``ad S_r (G) = -(P+ V_r P- + P- V_r P+)``.
    """
    t, vac, plus = problem.t, problem.vac, problem.plus
    w = weights(problem.interval, problem.site)
    V = problem.V
    dtype = np.result_type(V, problem.G)

    def weighted(x):
        return hermitian_norm(w[:, None] * x * w[None, :])

    trivial = t == 0.0 or not np.any(V)
    g_chain: dict[tuple[int, int], np.ndarray] = {}
    v_chain: dict[tuple[int, int], np.ndarray] = {(0, 0): V}
    us: dict[int, np.ndarray] = {}
    terms: list[SeriesTerm] = []
    below_prev = False
    for j in range(1, max_order + 1):
        if j == 1:
            vj = V.astype(dtype, copy=True)
        else:
            vj = np.zeros_like(V, dtype=dtype)
            for p in range(2, j + 1):
                acc = None
                for r in range(1, j - p + 2):
                    inner = g_chain.get((p - 1, j - r))
                    if inner is None:
                        continue
                    term = _ad_rank2(us[r], vac, inner)
                    acc = term if acc is None else acc + term
                if acc is not None:
                    g_chain[(p, j)] = acc
                    vj += acc / math.factorial(p)
            m = j - 1
            for p in range(1, m + 1):
                acc = None
                for r in range(1, m - p + 2):
                    inner = v_chain.get((p - 1, m - r))
                    if inner is None:
                        continue
                    term = _ad_rank2(us[r], vac, inner)
                    acc = term if acc is None else acc + term
                if acc is not None:
                    v_chain[(p, m)] = acc
                    vj += acc / math.factorial(p)
        u = np.zeros(V.shape[0], dtype=dtype)
        u[plus] = problem.resolve(vj[plus, vac])
        us[j] = u
        g_chain[(1, j)] = -_off_diagonal(vj, vac)
        terms.append(SeriesTerm(j, _rank2_matrix(u, vac), vj, block_diagonal_part(vj, vac), u))

        if trivial:
            break
        size_v = t ** j * weighted(vj)
        size_s = t ** j * float(np.linalg.norm(u))
        if not (math.isfinite(size_v) and size_v < DIVERGENCE_CAP):
            raise SeriesDivergence(
                f"series on {problem.interval} diverges at order {j} (t^j |V_j| = {size_v:.3e})",
                problem.step)
        below = size_v < tol_series and size_s < tol_series
        # two consecutive negligible orders guard against parity-vanishing orders
        if below and below_prev:
            break
        below_prev = below
    else:
        raise SeriesDivergence(
            f"series on {problem.interval} not converged after {max_order} orders at t={t}; "
            "the coupling is likely outside the convergence radius", problem.step)
    return terms


def generator(terms: list[SeriesTerm], t: float) -> np.ndarray:
    """Truncated ``S = sum_j t^j (S)_j``."""
    s = np.zeros_like(terms[0].s)
    for term in terms:
        s = s + t ** term.order * term.s
    return s


def exp_S(terms: list[SeriesTerm], t: float) -> np.ndarray:
    """Unitary ``exp(S)`` from the eigendecomposition of the Hermitian ``iS``."""
    s = generator(terms, t)
    if not np.any(s):
        return np.eye(s.shape[0], dtype=s.dtype)
    lam, q = np.linalg.eigh(1j * s)
    u = (q * np.exp(-1j * lam)) @ q.conj().T
    if np.isrealobj(s):
        u = u.real
    return u


def diagonal_potential(terms: list[SeriesTerm], t: float) -> np.ndarray:
    """``sum_j t^{j-1} (V)_j^diag``: the block-diagonalized potential on ``I_{k,q}``."""
    out = np.zeros_like(terms[0].v_diag)
    for term in terms:
        out = out + t ** (term.order - 1) * term.v_diag
    return out


def ad_series(s: np.ndarray, x: np.ndarray, w: np.ndarray, tol: float,
              max_order: int) -> np.ndarray:
    """``sum_{n>=1} ad^n S (X) / n!`` truncated once a term's weighted size drops below ``tol``.

    The weighted Frobenius norm (an upper bound of the weighted operator norm)
    decides the cut.
    """
    term = x
    total = np.zeros(np.broadcast_shapes(s.shape, x.shape), dtype=np.result_type(s, x))
    for n in range(1, max_order + 1):
        term = (s @ term - term @ s) / n
        total += term
        size = float(np.linalg.norm(w[:, None] * term * w[None, :]))
        if size < tol:
            return total
        if not (math.isfinite(size) and size < DIVERGENCE_CAP):
            break
    raise SeriesDivergence(f"conjugation series not converged after {max_order} terms")


def _hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


@dataclass
class AlphaResult:
    table: PotentialTable
    cases: dict[Interval, RelationCase]
    crosscheck: Optional[float] = None


def apply_alpha(table: PotentialTable, step: StepIndex, terms: list[SeriesTerm],
                t: Optional[float] = None, tolerances: Tolerances = Tolerances(),
                unitary: Optional[np.ndarray] = None) -> AlphaResult:
    """Effective potentials at ``step`` from those at its predecessor.

    When ``unitary`` is given, every case c/d-1/d-2 contribution is recomputed
    as ``U V U^* - V`` and the largest weighted discrepancy is reported.
    """
    t = table.chain.t if t is None else t
    site, n = table.site, table.chain.n
    d = site.dim
    I = step.interval
    cases: dict[Interval, RelationCase] = {}
    for target in intervals(n):
        cases[target] = classify(target, I)
    if t == 0.0:
        return AlphaResult(PotentialTable(table.chain, step, dict(table.entries), dict(table.norms)),
                           cases, 0.0 if unitary is not None else None)

    entries = dict(table.entries)
    norms = dict(table.norms)

    def store(interval: Interval, m: Optional[np.ndarray]):
        norms.pop(interval, None)
        if m is None:
            entries.pop(interval, None)
            return
        m = _hermitize(m)
        w = weights(interval, site)
        nrm = hermitian_norm(w[:, None] * m * w[None, :])
        if nrm < tolerances.prune:
            entries.pop(interval, None)
            return
        entries[interval] = LocalOperator(interval, m)
        norms[interval] = nrm

    store(I, diagonal_potential(terms, t))

    s_local = generator(terms, t)
    worst = 0.0 if unitary is not None else None
    for target, case in cases.items():
        if case is RelationCase.C:
            sources = [target]
        elif case in (RelationCase.D1, RelationCase.D2):
            sources = d_sources(target, I, case)
        else:
            continue
        present = [(src, table.get(src)) for src in sources if table.get(src) is not None]
        if not present:
            continue
        w = weights(target, site)
        s_t = embed_matrix(s_local, I, target, d)
        u_t = None if unitary is None else embed_matrix(unitary, I, target, d)
        old = table.get(target)
        new = np.zeros((d ** target.n_sites,) * 2, dtype=np.result_type(s_t, *(op.matrix for _, op in present)))
        if old is not None:
            new = new + old.matrix
        for src, op in present:
            x = embed_matrix(op.matrix, src, target, d)
            rem = ad_series(s_t, x, w, tolerances.tol_series, tolerances.max_order)
            new = new + rem
            if u_t is not None:
                direct = u_t @ x @ u_t.conj().T - x
                worst = max(worst, spectral_norm(w[:, None] * (direct - rem) * w[None, :]))
        store(target, new)
    return AlphaResult(PotentialTable(table.chain, step, entries, norms), cases, worst)


# -- the sweep ----------------------------------------------------------------


@dataclass
class StepRecord:
    step: StepIndex
    series_order_used: int
    s_norm: float
    s_weighted: float
    gap: float
    E: float
    offdiag_residual: float
    v_before: float
    v_after: float
    max_weighted_by_length: dict[int, float]
    crosscheck: Optional[float] = None


@dataclass
class StepContext:
    """Handed to observers after each step."""

    step: StepIndex
    problem: LocalProblem
    terms: list[SeriesTerm]
    unitary: np.ndarray
    before: PotentialTable
    after: PotentialTable
    cases: dict[Interval, RelationCase]
    record: StepRecord


def _max_by_length(table: PotentialTable) -> dict[int, float]:
    out: dict[int, float] = {}
    for interval, _ in table.potentials():
        out[interval.edges] = max(out.get(interval.edges, 0.0), table.weighted_norm(interval))
    return out


def run_step(table: PotentialTable, step: StepIndex, t: float,
             tolerances: Tolerances = Tolerances(), debug: bool = False) -> StepContext:
    problem = local_problem(table, step, t, tolerances.tol_offdiag)
    terms = series_terms(problem, tolerances.tol_series, tolerances.max_order)
    unitary = exp_S(terms, t)
    result = apply_alpha(table, step, terms, t, tolerances, unitary if debug else None)
    after = result.table
    I = step.interval
    s = generator(terms, t)
    h_half = np.sqrt(h0_diag(I, table.site) + 1.0)
    new_op = after.get(I)
    record = StepRecord(
        step=step,
        series_order_used=len(terms),
        s_norm=spectral_norm(s),
        s_weighted=spectral_norm(h_half[:, None] * s),
        gap=problem.gap,
        E=problem.E,
        offdiag_residual=0.0 if new_op is None or t == 0.0 else weighted_off_block_norm(new_op, table.site),
        v_before=table.weighted_norm(I),
        v_after=after.weighted_norm(I),
        max_weighted_by_length=_max_by_length(after),
        crosscheck=result.crosscheck,
    )
    if record.offdiag_residual > tolerances.tol_offdiag:
        raise InvariantViolation(
            f"potential on {I} not block-diagonal after its step "
            f"(residual {record.offdiag_residual:.3e})", step)
    return StepContext(step, problem, terms, unitary, table, after, result.cases, record)


def run_sweep(chain: ChainSpec, initial: PotentialTable, t: Optional[float] = None,
              tolerances: Tolerances = Tolerances(), debug: bool = False,
              on_step: Optional[Callable[[StepContext], None]] = None,
              ) -> tuple[PotentialTable, list[StepRecord]]:
    """Run every step of ``step_sequence(N)`` in order.

    On failure the raised :class:`SweepError` carries the records of the
    completed steps and the last good table.
    """
    t = chain.t if t is None else t
    if initial.chain is not chain:
        initial = replace(initial, chain=chain)
    table = initial
    records: list[StepRecord] = []
    for step in step_sequence(chain.n):
        if not precedes(table.current_step, step):
            raise ValueError(f"table at {tuple(table.current_step)} cannot run step {tuple(step)}")
        try:
            ctx = run_step(table, step, t, tolerances, debug)
        except SweepError as exc:
            exc.step = exc.step or step
            exc.records = records
            exc.table = table
            raise
        records.append(ctx.record)
        log.debug("step %s: order %d, gap %.6f, |S| %.3e", tuple(step),
                  ctx.record.series_order_used, ctx.record.gap, ctx.record.s_norm)
        if on_step is not None:
            on_step(ctx)
        table = ctx.after
    return table, records
