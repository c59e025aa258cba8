"""Dense tensor-product operators on intervals of an identical-site chain.

Every operator is stored in the product eigenbasis of the on-site Hamiltonian,
so the free Hamiltonian, its weights and the vacuum projectors are diagonal.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .intervals import Interval

HERMITIAN_RTOL = 1e-12


@dataclass(frozen=True)
class OnSiteSpace:
    """Spectrum of the single-site Hamiltonian in its own eigenbasis."""

    energies: tuple[float, ...]
    vacuum_index: int = 0

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        if e.ndim != 1 or e.size < 2:
            raise ValueError("on-site space needs at least two levels")
        if e[self.vacuum_index] != 0.0:
            raise ValueError("vacuum energy must be exactly zero")
        others = np.delete(e, self.vacuum_index)
        if others.min() < 1.0 - 1e-12:
            raise ValueError(f"excited on-site energies must be >= 1, got {others.min()!r}")

    @property
    def dim(self) -> int:
        return len(self.energies)

    @property
    def hamiltonian(self) -> np.ndarray:
        return np.diag(np.asarray(self.energies, dtype=float))


@dataclass(frozen=True)
class Normalization:
    """Shift, gap scale and potential scale applied to reach the normalized model."""

    shift: float = 0.0
    scale: float = 1.0
    potential_scale: float = 1.0


@dataclass(frozen=True)
class ChainSpec:
    n: int
    site: OnSiteSpace
    t: float = 0.0
    normalization: Optional[Normalization] = None
    max_dim: int = 1 << 14

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("chain needs at least one site")
        if self.t < 0:
            raise ValueError("coupling must be non-negative")
        if self.site.dim ** self.n > self.max_dim:
            raise MemoryError(
                f"total dimension {self.site.dim}**{self.n} exceeds budget {self.max_dim}")

    @property
    def full(self) -> Interval:
        return Interval(1, self.n - 1)

    @property
    def dim(self) -> int:
        return self.site.dim ** self.n


@dataclass(frozen=True, eq=False)
class LocalOperator:
    """Matrix acting on the factors of ``support`` (identity elsewhere)."""

    support: Interval
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("local operator matrix must be square")

    @property
    def site_dim(self) -> int:
        return _site_dim(self.matrix.shape[0], self.support.n_sites)

    def dagger(self) -> LocalOperator:
        return LocalOperator(self.support, self.matrix.conj().T)

    def is_hermitian(self, rtol: float = HERMITIAN_RTOL) -> bool:
        m = self.matrix
        scale = max(1.0, float(np.abs(m).max(initial=0.0)))
        return float(np.abs(m - m.conj().T).max(initial=0.0)) <= rtol * scale


def _site_dim(size: int, n_sites: int) -> int:
    d = int(round(size ** (1.0 / n_sites)))
    if d ** n_sites != size:
        raise ValueError(f"matrix side {size} is not a power of {n_sites} sites")
    return d


def embed_matrix(matrix: np.ndarray, support: Interval, target: Interval, d: int) -> np.ndarray:
    if not support.issubset(target):
        raise ValueError(f"{support} is not contained in {target}")
    left = d ** (support.left - target.left)
    right = d ** (target.right - support.right)
    out = matrix
    if left > 1:
        out = np.kron(np.eye(left), out)
    if right > 1:
        out = np.kron(out, np.eye(right))
    return out


def embed(op: LocalOperator, target: Interval) -> LocalOperator:
    """``op`` tensored with the identity on ``target`` minus its support."""
    if op.support == target:
        return op
    return LocalOperator(target, embed_matrix(op.matrix, op.support, target, op.site_dim))


@functools.lru_cache(maxsize=None)
def _h0_diag(energies: tuple[float, ...], n_sites: int) -> np.ndarray:
    e = np.asarray(energies, dtype=float)
    out = np.zeros(1)
    for _ in range(n_sites):
        out = np.add.outer(out, e).ravel()
    out.setflags(write=False)
    return out


def h0_diag(interval: Interval, site: OnSiteSpace) -> np.ndarray:
    """Diagonal of the free Hamiltonian on ``interval`` (read-only)."""
    return _h0_diag(site.energies, interval.n_sites)


def h0(interval: Interval, site: OnSiteSpace) -> LocalOperator:
    return LocalOperator(interval, np.diag(h0_diag(interval, site)))


@functools.lru_cache(maxsize=None)
def _weights(energies: tuple[float, ...], n_sites: int, power: float) -> np.ndarray:
    w = (_h0_diag(energies, n_sites) + 1.0) ** power
    w.setflags(write=False)
    return w


def weights(interval: Interval, site: OnSiteSpace, power: float = -0.5) -> np.ndarray:
    """Diagonal of ``(H0 + 1) ** power`` on ``interval``."""
    return _weights(site.energies, interval.n_sites, power)


def vacuum_index(interval: Interval, site: OnSiteSpace) -> int:
    """Flat index of the product vacuum in the basis of ``interval``."""
    n, d, v = interval.n_sites, site.dim, site.vacuum_index
    return int(np.ravel_multi_index((v,) * n, (d,) * n))


def minus_projector(interval: Interval, site: OnSiteSpace) -> LocalOperator:
    size = site.dim ** interval.n_sites
    p = np.zeros((size, size))
    v = vacuum_index(interval, site)
    p[v, v] = 1.0
    return LocalOperator(interval, p)


def plus_projector(interval: Interval, site: OnSiteSpace) -> LocalOperator:
    p = minus_projector(interval, site).matrix
    return LocalOperator(interval, np.eye(p.shape[0]) - p)


def _as_matrix_on(v: LocalOperator, interval: Interval) -> np.ndarray:
    return embed(v, interval).matrix


def weighted_matrix(v: LocalOperator, interval: Interval, site: OnSiteSpace) -> np.ndarray:
    w = weights(interval, site)
    return w[:, None] * _as_matrix_on(v, interval) * w[None, :]


def weighted_norm(v: LocalOperator, interval: Interval, site: OnSiteSpace) -> float:
    """``||(H0_I + 1)^(-1/2) V (H0_I + 1)^(-1/2)||`` with ``I = interval``.

    The weight belongs to ``interval``, so callers pass the interval that owns
    the potential, not merely one containing it.
    """
    m = weighted_matrix(v, interval, site)
    return hermitian_norm(m) if v.is_hermitian() else spectral_norm(m)


def spectral_norm(m: np.ndarray) -> float:
    if m.size == 0 or not np.any(m):
        return 0.0
    return float(np.linalg.norm(m, 2))


def hermitian_norm(m: np.ndarray) -> float:
    """Operator norm of a Hermitian matrix (largest absolute eigenvalue)."""
    if m.size == 0 or not np.any(m):
        return 0.0
    return float(np.abs(np.linalg.eigvalsh(m)).max())


def vacuum_expectation(v: LocalOperator, site: OnSiteSpace) -> float:
    idx = vacuum_index(v.support, site)
    return float(np.real(v.matrix[idx, idx]))


def off_block_norm(m: np.ndarray, vac: int) -> float:
    """Norm of ``P+ M P-`` and ``P- M P+`` (the larger) for a rank-one ``P-``."""
    col = np.delete(m[:, vac], vac)
    row = np.delete(m[vac, :], vac)
    return float(max(np.linalg.norm(col), np.linalg.norm(row)))


def weighted_off_block_norm(v: LocalOperator, site: OnSiteSpace) -> float:
    return off_block_norm(weighted_matrix(v, v.support, site), vacuum_index(v.support, site))


def block_diagonal_part(m: np.ndarray, vac: int) -> np.ndarray:
    """``P+ M P+ + P- M P-`` for a rank-one ``P-`` at flat index ``vac``."""
    out = m.copy()
    keep = out[vac, vac]
    out[vac, :] = 0.0
    out[:, vac] = 0.0
    out[vac, vac] = keep
    return out


def single_site_projectors(n_sites: int, site: OnSiteSpace, vacuum: bool = True) -> list[np.ndarray]:
    """``P_Omega_j`` (or its complement) for each site of an ``n_sites`` block."""
    d = site.dim
    p = np.zeros((d, d))
    p[site.vacuum_index, site.vacuum_index] = 1.0
    if not vacuum:
        p = np.eye(d) - p
    out = []
    for j in range(n_sites):
        out.append(np.kron(np.kron(np.eye(d ** j), p), np.eye(d ** (n_sites - j - 1))))
    return out
