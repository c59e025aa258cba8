import numpy as np
import pytest
from hypothesis import given, strategies as st

from lieschwinger.intervals import Interval
from lieschwinger.operators import (
    ChainSpec,
    LocalOperator,
    OnSiteSpace,
    block_diagonal_part,
    embed,
    embed_matrix,
    h0,
    h0_diag,
    hermitian_norm,
    minus_projector,
    off_block_norm,
    plus_projector,
    single_site_projectors,
    spectral_norm,
    vacuum_expectation,
    vacuum_index,
    weighted_norm,
    weights,
)

SITE2 = OnSiteSpace((0.0, 1.0))
SITE3 = OnSiteSpace((0.0, 1.0, 2.5))


def test_onsite_validation():
    with pytest.raises(ValueError):
        OnSiteSpace((0.1, 1.0))
    with pytest.raises(ValueError):
        OnSiteSpace((0.0, 0.5))
    with pytest.raises(ValueError):
        OnSiteSpace((0.0,))
    assert SITE3.dim == 3 and np.array_equal(SITE3.hamiltonian, np.diag([0.0, 1.0, 2.5]))


def test_chain_budget():
    with pytest.raises(MemoryError):
        ChainSpec(20, SITE2)
    with pytest.raises(ValueError):
        ChainSpec(3, SITE2, t=-0.1)
    assert ChainSpec(3, SITE3).dim == 27


def test_embed_against_explicit_kron(rng):
    m = rng.normal(size=(9, 9))
    out = embed_matrix(m, Interval(2, 1), Interval(1, 3), 3)
    expected = np.kron(np.kron(np.eye(3), m), np.eye(3))
    assert np.array_equal(out, expected)
    op = LocalOperator(Interval(2, 1), m)
    assert embed(op, Interval(2, 1)) is op
    with pytest.raises(ValueError):
        embed_matrix(m, Interval(2, 1), Interval(3, 2), 3)


def test_h0_is_sum_of_embedded_onsite_terms():
    iv = Interval(1, 2)
    total = sum(embed_matrix(SITE3.hamiltonian, Interval(j, 0), iv, 3) for j in iv.sites())
    assert np.allclose(h0(iv, SITE3).matrix, total)
    assert np.allclose(weights(iv, SITE3), (np.diag(total) + 1) ** -0.5)
    assert not h0_diag(iv, SITE3).flags.writeable


def test_vacuum_index_and_projectors():
    site = OnSiteSpace((1.0, 0.0, 2.0), vacuum_index=1)
    iv = Interval(1, 1)
    idx = vacuum_index(iv, site)
    assert idx == 4 and h0_diag(iv, site)[idx] == 0.0
    pm, pp = minus_projector(iv, site).matrix, plus_projector(iv, site).matrix
    assert np.allclose(pm + pp, np.eye(9)) and np.allclose(pm @ pp, 0)
    ps = single_site_projectors(2, SITE2)
    assert np.allclose(ps[0] @ ps[1], minus_projector(iv, SITE2).matrix)


def test_weighted_norm_of_xx_bond():
    x = np.array([[0.0, 1.0], [1.0, 0.0]])
    op = LocalOperator(Interval(1, 1), np.kron(x, x))
    # weights 1, 1/sqrt2, 1/sqrt2, 1/sqrt3 on |00>,|01>,|10>,|11>; the
    # weighted matrix pairs 00<->11 (1/sqrt3) and 01<->10 (1/2)
    assert weighted_norm(op, Interval(1, 1), SITE2) == pytest.approx(1 / np.sqrt(3), abs=1e-15)


@given(st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
def test_norm_helpers_agree(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    h = a + a.conj().T
    assert hermitian_norm(h) == pytest.approx(np.linalg.norm(h, 2), rel=1e-12)
    assert spectral_norm(np.zeros((n, n))) == 0.0


@given(st.integers(0, 2 ** 32 - 1))
def test_block_diagonal_part(seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(9, 9))
    vac = int(rng.integers(9))
    p = np.zeros((9, 9))
    p[vac, vac] = 1
    q = np.eye(9) - p
    assert np.allclose(block_diagonal_part(m, vac), p @ m @ p + q @ m @ q)
    expected = max(np.linalg.norm(q @ m @ p, 2), np.linalg.norm(p @ m @ q, 2))
    assert off_block_norm(m, vac) == pytest.approx(expected, rel=1e-12)


def test_local_operator_helpers(rng):
    m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    op = LocalOperator(Interval(1, 1), m)
    assert op.site_dim == 2 and not op.is_hermitian()
    herm = LocalOperator(Interval(1, 1), m + m.conj().T)
    assert herm.is_hermitian() and np.array_equal(herm.dagger().matrix, herm.matrix.conj().T)
    assert vacuum_expectation(herm, SITE2) == pytest.approx(2 * m[0, 0].real)
    with pytest.raises(ValueError):
        LocalOperator(Interval(1, 1), np.zeros((4, 3)))
