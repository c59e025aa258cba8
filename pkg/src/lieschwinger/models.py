"""Concrete chains in normalized units: quartic anharmonic crystal and finite spin models.

Normalization shifts the on-site spectrum so the vacuum sits at 0, rescales
the whole Hamiltonian so the first excitation sits at 1, and finally rescales
the bond so its weighted norm on a two-site interval is exactly 1/2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .engine import PotentialTable, assemble, initial_table
from .intervals import Interval
from .operators import (
    ChainSpec,
    LocalOperator,
    Normalization,
    OnSiteSpace,
    spectral_norm,
    weights,
)

BOND_NORM = 0.5
CONVERGENCE_TOL = 1e-8
CONVERGENCE_EXTRA = 8
DEGENERACY_TOL = 1e-10


class ModelError(ValueError):
    pass


class TruncationError(ModelError):
    """The kept on-site levels are not converged in the raw oscillator basis."""

    def __init__(self, message: str, d: int, d_raw: int, deviation: float):
        super().__init__(message)
        self.d = d
        self.d_raw = d_raw
        self.deviation = deviation


@dataclass(frozen=True)
class NormalizedModel:
    site: OnSiteSpace
    bond: np.ndarray
    normalization: Normalization


def fix_signs(vecs: np.ndarray) -> np.ndarray:
    """Make the first non-negligible component of every column real and positive."""
    out = vecs.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        big = np.abs(col) > 1e-12 * np.abs(col).max()
        first = col[np.argmax(big)]
        out[:, j] = col * (abs(first) / first)
    if np.iscomplexobj(out) and not np.any(out.imag):
        out = out.real
    return out


def _snap(x: float, target: float) -> float:
    return target if abs(x - target) <= 4 * np.finfo(float).eps * abs(target) else x


def normalize(energies: np.ndarray, bond: np.ndarray) -> NormalizedModel:
    """Shift/scale sorted on-site energies and scale a two-site bond given in the same eigenbasis."""
    e = np.asarray(energies, dtype=float)
    if np.any(np.diff(e) < 0):
        raise ModelError("on-site energies must be sorted ascending")
    if e[1] - e[0] <= DEGENERACY_TOL * max(1.0, abs(e[0])):
        raise ModelError("unique ground state required")
    shift = float(e[0])
    scale = _snap(1.0 / float(e[1] - e[0]), 1.0)
    scaled = (e - shift) * scale
    scaled[0], scaled[1] = 0.0, 1.0
    site = OnSiteSpace(tuple(float(x) for x in scaled))

    bond = np.asarray(bond) * scale
    w = weights(Interval(1, 1), site)
    wn = spectral_norm(w[:, None] * bond * w[None, :])
    if wn == 0.0:
        raise ModelError("bond potential is zero; it cannot be scaled to weighted norm 1/2")
    mu = _snap(BOND_NORM / wn, 1.0)
    if mu != 1.0:
        bond = bond * mu
    return NormalizedModel(site, bond, Normalization(shift, scale, mu))


def _chain_from(model: NormalizedModel, n: int, t: float, max_dim: int) -> tuple[ChainSpec, PotentialTable]:
    chain = ChainSpec(n, model.site, t, model.normalization, max_dim)
    bonds = {Interval(i, 1): model.bond for i in range(1, n)}
    return chain, initial_table(chain, bonds)


# -- quartic anharmonic oscillator --------------------------------------------


def ladder_x(size: int) -> np.ndarray:
    """Position operator ``(a + a^*)/sqrt 2`` in the oscillator basis."""
    off = np.sqrt(np.arange(1, size) / 2.0)
    return np.diag(off, 1) + np.diag(off, -1)


def anharmonic_hamiltonian(d_raw: int) -> tuple[np.ndarray, np.ndarray]:
    """``-d^2/dx^2 + x^2 + x^4`` and ``x`` on the lowest ``d_raw`` oscillator states.

    Products are formed in a basis four states larger and then cut, so every
    kept matrix element is exact.
    """
    size = d_raw + 4
    x = ladder_x(size)
    off = np.sqrt(np.arange(1, size) / 2.0)
    p_im = np.diag(off, 1) - np.diag(off, -1)  # p = -i * p_im
    x2 = x @ x
    h = -(p_im @ p_im) + x2 + x2 @ x2
    return h[:d_raw, :d_raw], x[:d_raw, :d_raw]


def anharmonic_levels(d: int, d_raw: int) -> tuple[np.ndarray, np.ndarray]:
    """Lowest ``d`` eigenpairs at basis size ``d_raw`` (sign-fixed columns)."""
    h, _ = anharmonic_hamiltonian(d_raw)
    lam, vecs = np.linalg.eigh(h)
    return lam[:d], fix_signs(vecs[:, :d])


def check_truncation(d: int, d_raw: int, tol: float = CONVERGENCE_TOL) -> float:
    lo, _ = anharmonic_levels(d, d_raw)
    hi, _ = anharmonic_levels(d, d_raw + CONVERGENCE_EXTRA)
    deviation = float(np.abs(lo - hi).max())
    if deviation > tol:
        raise TruncationError(
            f"lowest {d} levels not converged at d_raw={d_raw}: they move by {deviation:.3e} "
            f"when the basis grows to {d_raw + CONVERGENCE_EXTRA} (tolerance {tol:g})",
            d, d_raw, deviation)
    return deviation


def phi4_model(d: int, d_raw: int) -> NormalizedModel:
    if not 2 <= d <= d_raw:
        raise ModelError(f"need 2 <= d <= d_raw, got d={d}, d_raw={d_raw}")
    check_truncation(d, d_raw)
    lam, vecs = anharmonic_levels(d, d_raw)
    _, x = anharmonic_hamiltonian(d_raw)
    x_kept = vecs.T @ x @ vecs
    x_kept = 0.5 * (x_kept + x_kept.T)
    return normalize(lam, np.kron(x_kept, x_kept))


def build_phi4(n: int, d: int, d_raw: int = 60, t: float = 0.0,
               max_dim: int = 1 << 14) -> tuple[ChainSpec, PotentialTable]:
    """Truncated quartic crystal with nearest-neighbour coupling ``x_i x_{i+1}``."""
    return _chain_from(phi4_model(d, d_raw), n, t, max_dim)


# -- finite-dimensional models from matrices ----------------------------------


def _parse_matrix(raw, name: str) -> np.ndarray:
    """Row-major complex matrix from ``[[re, im], ...]`` (flat) or rows of such pairs."""
    a = np.asarray(raw, dtype=float)
    if a.ndim == 2 and a.shape[1] == 2:
        side = int(round(np.sqrt(a.shape[0])))
        if side * side != a.shape[0]:
            raise ModelError(f"'{name}' has {a.shape[0]} entries, not a square count")
        a = a.reshape(side, side, 2)
    if a.ndim != 3 or a.shape[0] != a.shape[1] or a.shape[2] != 2:
        raise ModelError(f"'{name}' must be a square matrix of [re, im] pairs")
    m = a[..., 0] + 1j * a[..., 1]
    return m.real.copy() if not np.any(m.imag) else m


def _check_hermitian(m: np.ndarray, name: str):
    scale = max(1.0, float(np.abs(m).max()))
    if float(np.abs(m - m.conj().T).max()) > 1e-12 * scale:
        raise ModelError(f"'{name}' matrix is not Hermitian")


def spin_model(onsite: np.ndarray, bond: np.ndarray) -> NormalizedModel:
    onsite = np.asarray(onsite)
    bond = np.asarray(bond)
    d = onsite.shape[0]
    if bond.shape != (d * d, d * d):
        raise ModelError(f"bond must be {d * d}x{d * d} for a {d}-level site, got {bond.shape}")
    _check_hermitian(onsite, "onsite")
    _check_hermitian(bond, "bond")
    lam, vecs = np.linalg.eigh(onsite)
    vecs = fix_signs(vecs)
    q = np.kron(vecs, vecs)
    b = q.conj().T @ bond @ q
    b = 0.5 * (b + b.conj().T)
    if np.iscomplexobj(b) and not np.any(b.imag):
        b = b.real
    return normalize(lam, b)


PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]])


def default_spin_matrices() -> tuple[np.ndarray, np.ndarray]:
    return np.diag([0.0, 1.0]), np.kron(PAULI_X, PAULI_X)


def load_spec_file(path: Union[str, Path]) -> tuple[np.ndarray, np.ndarray]:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict) or set(data) != {"onsite", "bond"}:
        raise ModelError("spec file must be an object with exactly the keys 'onsite' and 'bond'")
    return _parse_matrix(data["onsite"], "onsite"), _parse_matrix(data["bond"], "bond")


def build_spin(n: int, d: Optional[int] = None, t: float = 0.0,
               spec_file: Optional[Union[str, Path]] = None,
               max_dim: int = 1 << 14) -> tuple[ChainSpec, PotentialTable]:
    """Finite-level chain; without ``spec_file`` the two-level diag(0,1) / XX model."""
    onsite, bond = default_spin_matrices() if spec_file is None else load_spec_file(spec_file)
    if d is not None and onsite.shape[0] != d:
        raise ModelError(f"configured d={d} but the on-site matrix is {onsite.shape[0]}x{onsite.shape[0]}")
    return _chain_from(spin_model(onsite, bond), n, t, max_dim)


def assemble_full(chain: ChainSpec, table: PotentialTable, t: Optional[float] = None) -> LocalOperator:
    """Dense chain Hamiltonian: on-site terms plus ``t`` times every potential."""
    t = chain.t if t is None else t
    m = assemble(table, t, chain.full)
    return LocalOperator(chain.full, 0.5 * (m + m.conj().T))
