"""Spectral checks: local gaps, form bounds, resolvent norms and the final gap certificate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .bounds import DEFAULT_GAP, gap_prefactor
from .engine import PotentialTable, assemble
from .intervals import Interval
from .operators import ChainSpec, OnSiteSpace, h0_diag, off_block_norm, vacuum_index

DEFAULT_ORACLE_BUDGET = 4096
VACUUM_TOL = 1e-12


class CertificationError(RuntimeError):
    def __init__(self, claim: str, message: str):
        super().__init__(f"{claim}: {message}")
        self.claim = claim


def lowest_eigenvalue(m: np.ndarray) -> float:
    if m.shape[0] == 0:
        return math.inf
    return float(scipy.linalg.eigvalsh(m, subset_by_index=[0, 0])[0])


def _plus_block(m: np.ndarray, vac: int) -> np.ndarray:
    keep = np.delete(np.arange(m.shape[0]), vac)
    return m[np.ix_(keep, keep)]


# -- local checks -------------------------------------------------------------


@dataclass
class LocalGap:
    delta: float
    vacuum_residual: float

    @property
    def vacuum_is_eigenvector(self) -> bool:
        return self.vacuum_residual <= VACUUM_TOL * max(1.0, self.delta)


def gap_of_G(G: np.ndarray, E: float, interval: Interval, site: OnSiteSpace) -> LocalGap:
    """Gap above ``E`` of ``G`` compressed to the excited block, and ``|| G vac - E vac ||``."""
    vac = vacuum_index(interval, site)
    delta = lowest_eigenvalue(_plus_block(G, vac)) - E
    col = G[:, vac].copy()
    col[vac] -= E
    return LocalGap(delta, float(np.linalg.norm(col)))


def verify_form_bound(G: np.ndarray, E: float, interval: Interval, site: OnSiteSpace,
                      t: float) -> float:
    """Smallest eigenvalue of ``P+ (G - E) P+ - p(t) P+ H0 P+`` on the excited block."""
    vac = vacuum_index(interval, site)
    h = np.delete(h0_diag(interval, site), vac)
    m = _plus_block(G, vac) - E * np.eye(h.size) - gap_prefactor(t) * np.diag(h)
    return lowest_eigenvalue(m)


def verify_relative_bound(G: np.ndarray, E: float, interval: Interval, site: OnSiteSpace,
                          delta: float = DEFAULT_GAP) -> float:
    """Smallest eigenvalue of ``P+ (G - E) P+ - (delta/2) P+ (H0 + 1) P+``."""
    vac = vacuum_index(interval, site)
    h = np.delete(h0_diag(interval, site), vac)
    m = _plus_block(G, vac) - E * np.eye(h.size) - 0.5 * delta * np.diag(h + 1.0)
    return lowest_eigenvalue(m)


def resolvent_norms(G: np.ndarray, E: float, interval: Interval,
                    site: OnSiteSpace) -> tuple[float, float]:
    """``||(G-E)^{-1/2} P+ (H0+1)^{1/2}||`` and ``||(G-E)^{-1} P+ (H0+1)^{1/2}||``."""
    vac = vacuum_index(interval, site)
    lam, q = np.linalg.eigh(_plus_block(G, vac))
    shifted = lam - E
    if shifted.min() <= 0:
        return math.inf, math.inf
    root = np.sqrt(np.delete(h0_diag(interval, site), vac) + 1.0)
    right = q.conj().T * root[None, :]
    half = np.linalg.norm(shifted[:, None] ** -0.5 * right, 2)
    full = np.linalg.norm(shifted[:, None] ** -1.0 * right, 2)
    return float(half), float(full)


@dataclass
class StepCertificate:
    delta: float
    vacuum_residual: float
    form_margin: float
    relative_margin: float
    resolvent_half: float
    resolvent_full: float
    delta_required: float = DEFAULT_GAP

    @property
    def resolvent_half_bound(self) -> float:
        return math.sqrt(2.0) / math.sqrt(self.delta_required)

    @property
    def resolvent_full_bound(self) -> float:
        return math.sqrt(2.0) / self.delta_required


def certify_step(G: np.ndarray, E: float, interval: Interval, site: OnSiteSpace,
                 t: float, delta_required: float = DEFAULT_GAP) -> StepCertificate:
    gap = gap_of_G(G, E, interval, site)
    half, full = resolvent_norms(G, E, interval, site)
    return StepCertificate(
        delta=gap.delta,
        vacuum_residual=gap.vacuum_residual,
        form_margin=verify_form_bound(G, E, interval, site, t),
        relative_margin=verify_relative_bound(G, E, interval, site, delta_required),
        resolvent_half=half,
        resolvent_full=full,
        delta_required=delta_required,
    )


# -- final certificate --------------------------------------------------------


@dataclass
class OracleResult:
    status: str
    spectrum: Optional[np.ndarray] = None
    notice: str = ""


def exact_oracle(chain: ChainSpec, table: PotentialTable, t: Optional[float] = None,
                 budget: int = DEFAULT_ORACLE_BUDGET) -> OracleResult:
    """Full sorted spectrum of the assembled chain Hamiltonian, or a skip notice."""
    t = chain.t if t is None else t
    if chain.dim > budget:
        return OracleResult("skipped", None,
                            f"dimension {chain.dim} exceeds the oracle budget {budget}")
    k = assemble(table, t, chain.full)
    k = 0.5 * (k + k.conj().T)
    return OracleResult("checked", np.linalg.eigvalsh(k))


@dataclass
class GapCertificate:
    delta_measured: float
    delta_required: float
    vacuum_is_ground: bool
    offblock: float
    vacuum_energy: float
    spectrum: np.ndarray = field(repr=False)
    oracle: OracleResult = field(repr=False, default_factory=lambda: OracleResult("skipped"))

    @property
    def spectral_gap(self) -> float:
        return float(self.spectrum[1] - self.spectrum[0]) if self.spectrum.size > 1 else math.inf

    @property
    def oracle_deviation(self) -> Optional[float]:
        if self.oracle.spectrum is None:
            return None
        return float(np.abs(self.oracle.spectrum - self.spectrum).max())

    @property
    def checksum(self) -> float:
        return float(np.sum(self.spectrum))


def certify_final(final: PotentialTable, chain: ChainSpec, t: Optional[float] = None,
                  initial: Optional[PotentialTable] = None,
                  oracle_budget: int = DEFAULT_ORACLE_BUDGET,
                  delta_required: float = DEFAULT_GAP) -> GapCertificate:
    """Gap data of the reassembled final Hamiltonian, with the oracle spectrum of the original one.

    No claim is asserted here; see :func:`final_failures`.
    """
    t = chain.t if t is None else t
    full = chain.full
    k = assemble(final, t, full)
    k = 0.5 * (k + k.conj().T)
    vac = vacuum_index(full, chain.site)
    vacuum_energy = float(np.real(k[vac, vac]))
    delta = lowest_eigenvalue(_plus_block(k, vac)) - vacuum_energy
    spectrum = np.linalg.eigvalsh(k)
    oracle = (exact_oracle(chain, initial, t, oracle_budget) if initial is not None
              else OracleResult("skipped", None, "no initial table given"))
    return GapCertificate(delta, delta_required, delta > 0, off_block_norm(k, vac),
                          vacuum_energy, spectrum, oracle)


def final_failures(cert: GapCertificate, tol_offdiag: float = 1e-10,
                   tol_spectrum: float = 1e-8, tol_gap: float = 1e-6) -> list[tuple[str, str]]:
    """Violated final claims as ``(claim, message)`` pairs."""
    out = []
    if cert.offblock > tol_offdiag:
        out.append(("final_block_diagonal", f"off-block norm {cert.offblock:.3e} > {tol_offdiag:g}"))
    if cert.delta_measured < cert.delta_required - tol_gap:
        out.append(("final_gap", f"gap {cert.delta_measured:.12g} < {cert.delta_required}"))
    if not cert.vacuum_is_ground or cert.spectral_gap < cert.delta_required - tol_gap:
        out.append(("unique_ground_state",
                    f"second-lowest level only {cert.spectral_gap:.12g} above the ground state"))
    dev = cert.oracle_deviation
    if dev is not None and dev > tol_spectrum:
        out.append(("spectrum_preservation", f"spectrum deviates from the oracle by {dev:.3e}"))
    return out


# -- projector inequalities ---------------------------------------------------


def _site_projectors(vacua: Sequence[np.ndarray]) -> list[np.ndarray]:
    out = []
    for v in vacua:
        v = v / np.linalg.norm(v)
        out.append(np.outer(v, v.conj()))
    return out


def _kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    out = np.eye(1)
    for m in mats:
        out = np.kron(out, m)
    return out


def _product_on(ps: Sequence[np.ndarray], lo: int, hi: int) -> np.ndarray:
    """``prod_{s=lo}^{hi} P_s`` on the whole chain (sites 1-based)."""
    mats = [np.eye(p.shape[0]) for p in ps]
    mats[lo - 1:hi] = ps[lo - 1:hi]
    return _kron_all(mats)


def product_complement_margin(vacua: Sequence[np.ndarray]) -> float:
    """Lowest eigenvalue of ``sum_i (1 - P_i) - (1 - prod_i P_i)``."""
    ps = _site_projectors(vacua)
    n = len(ps)
    eye = np.eye(int(np.prod([p.shape[0] for p in ps])))
    m = sum(eye - _product_on(ps, i, i) for i in range(1, n + 1)) - (eye - _kron_all(ps))
    return lowest_eigenvalue(0.5 * (m + m.conj().T))


def covering_margin(vacua: Sequence[np.ndarray], r: int, lo: int, hi: int) -> float:
    """Lowest eigenvalue of ``(r+1) sum_{i=lo}^{hi+r} (1 - P_i) - sum_{i=lo}^{hi} P+_{I_{r,i}}``.

    Sites are 1-based; requires ``1 <= lo <= hi`` and ``hi + r <= len(vacua)``.
    """
    n = len(vacua)
    if not (1 <= lo <= hi and hi + r <= n):
        raise ValueError("covering inequality needs 1 <= lo <= hi <= n - r")
    ps = _site_projectors(vacua)
    eye = np.eye(int(np.prod([p.shape[0] for p in ps])))
    lhs = (r + 1) * sum(eye - _product_on(ps, i, i) for i in range(lo, hi + r + 1))
    rhs = sum(eye - _product_on(ps, i, i + r) for i in range(lo, hi + 1))
    m = lhs - rhs
    return lowest_eigenvalue(0.5 * (m + m.conj().T))
