import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seplab import doublestate as ds
from seplab import fermion as fm
from seplab import gaussian as ga
from seplab.pauli import ResourceError


def rng_for(seed):
    return np.random.default_rng(seed)


# ---- purification --------------------------------------------------------------------


def test_pure_input_gives_product():
    M = ga.random_pure_covariance(3, rng_for(0))
    st_ = ds.purify_covariance(M)
    X = ds._pair_swap(3)
    np.testing.assert_allclose(st_.ket_block, M.matrix, atol=1e-10)
    np.testing.assert_allclose(st_.bra_block, -X @ M.matrix @ X, atol=1e-10)
    np.testing.assert_allclose(st_.gamma[:6, 6:], 0, atol=1e-7)


def test_maximally_mixed_gives_reference_pairs():
    st_ = ds.purify_covariance(ga.MajoranaCovariance(np.zeros((6, 6))))
    np.testing.assert_allclose(st_.gamma, ds.reference_covariance(3), atol=1e-12)


@pytest.mark.parametrize("mode", [ds.LINEAR, ds.SQRT])
def test_purification_matches_dense(mode):
    rng = rng_for(1)
    M = ga.random_mixed_covariance(3, rng, 0.8)
    st_ = ds.purify_covariance(M, mode)
    assert st_.purity_defect() < 1e-8
    psi = ds.double_state_dense(fm.gaussian_density(M.matrix), 3, mode)
    assert np.max(np.abs(fm.state_covariance(psi, 6) - st_.gamma)) < 1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 5), st.integers(0, 10 ** 6))
def test_sqrt_mode_ket_block_is_input(n, seed):
    M = ga.random_mixed_covariance(n, rng_for(seed))
    st_ = ds.purify_covariance(M, ds.SQRT)
    np.testing.assert_allclose(st_.ket_block, M.matrix, atol=1e-12)
    assert st_.purity_defect() < 1e-8


def test_linear_mode_ket_block_is_squared_state():
    rng = rng_for(2)
    M = ga.random_mixed_covariance(2, rng, 0.7)
    rho = fm.gaussian_density(M.matrix)
    sq = rho @ rho / np.trace(rho @ rho)
    np.testing.assert_allclose(ds.purify_covariance(M).ket_block, fm.covariance_of(sq, 2),
                               atol=1e-10)


def test_unknown_mode():
    with pytest.raises(ValueError):
        ds.purify_covariance(ga.vacuum_covariance(1), "cube")


# ---- transport rules -----------------------------------------------------------------


def test_transport_rules_random():
    rng = rng_for(3)
    for n in (1, 2, 3):
        rep = ds.cj_transport_rules_dense(ds.random_even_density(n, rng), n)
        assert rep.ok(1e-12), rep


def test_transport_rules_vacuum_and_mixed():
    vac = np.zeros((2, 2))
    vac[0, 0] = 1
    assert ds.cj_transport_rules_dense(vac, 1).ok()
    assert ds.cj_transport_rules_dense(np.eye(4) / 4, 2).ok()


def test_transport_rejects_odd_parity():
    rho = np.array([[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(ds.ParityError):
        ds.cj_transport_rules_dense(rho, 1)


def test_transport_cap():
    with pytest.raises(ResourceError):
        ds.cj_transport_rules_dense(np.eye(16) / 16, 4)


# ---- naive map -----------------------------------------------------------------------


def test_naive_map_counterexample():
    rep = ds.naive_map_counterexample(0.5)
    assert rep.naive_idempotency_defect > 0.1
    assert rep.channel_idempotency_defect < 1e-12
    assert rep.corrected_vs_channel < 1e-12
    assert rep.naive_vs_channel > 0.1


@pytest.mark.parametrize("p", [0.1, 0.3, 0.5])
def test_doubled_channel(p):
    for seed in range(3):
        M = ga.random_mixed_covariance(2, rng_for(seed), 0.8)
        assert ds.doubled_channel_check(M, p) < 1e-10


# ---- fermionic transpose -------------------------------------------------------------


def test_diagonal_state_is_its_own_transpose():
    rho = np.diag([0.4, 0.3, 0.2, 0.1]).astype(complex)
    np.testing.assert_allclose(ds.fermionic_transpose_dense(rho, 2), rho, atol=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_transpose_covariance_rule(seed):
    M = ga.random_pure_covariance(2, rng_for(seed))
    rho = fm.gaussian_density(M.matrix)
    T = ds.fermionic_transpose_dense(rho, 2)
    assert np.max(np.abs(fm.covariance_of(T, 2) - ds.transpose_covariance_rule(M.matrix))) < 1e-12


def test_transpose_twist():
    rng = rng_for(5)
    n = 2
    A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    P = fm.parity(n)
    even, odd = 0.5 * (A + P @ A @ P), 0.5 * (A - P @ A @ P)
    twice = lambda O: ds.fermionic_transpose_dense(
        ds.fermionic_transpose_dense(O, n, even_only=False), n, even_only=False)
    np.testing.assert_allclose(twice(even), even, atol=1e-12)
    np.testing.assert_allclose(twice(odd), -odd, atol=1e-12)


def test_bosonic_transpose_differs_on_odd_coherence():
    psi = np.array([1, 1, 0, 0], dtype=complex) / np.sqrt(2)
    rho = np.outer(psi, psi.conj())
    T = ds.fermionic_transpose_dense(rho, 2, even_only=False)
    assert np.max(np.abs(T - rho.T)) > 0.5


def test_transpose_rejects_odd_by_default():
    psi = np.array([1, 1], dtype=complex) / np.sqrt(2)
    with pytest.raises(ds.ParityError):
        ds.fermionic_transpose_dense(np.outer(psi, psi.conj()), 1)


# ---- double-state spectrum -----------------------------------------------------------


@pytest.fixture(scope="module")
def cylinder():
    return ga.BdgModel(12, 6, bc_x="antiperiodic", bc_y="open")


def test_spectrum_particle_hole_symmetric(cylinder):
    sp = ds.double_state_entanglement_spectrum(cylinder, 0.05, range(3))
    assert sp.resolved
    np.testing.assert_allclose(np.sort(sp.nu), np.sort(-sp.nu), atol=1e-8)


def test_full_decoherence_pairs_ket_with_bra(cylinder):
    # at p = 1/2 every ket mode is maximally entangled with its own bra partner
    sp = ds.double_state_entanglement_spectrum(cylinder, 0.5, range(3))
    np.testing.assert_allclose(np.abs(sp.nu), 1.0, atol=1e-10)


def test_gap_opens_with_decoherence():
    gaps = [ds.cylinder_gap(24, 8, p) for p in (0.0, 0.02, 0.05)]
    assert gaps[0] < gaps[1] < gaps[2]


def test_rate_range(cylinder):
    with pytest.raises(ValueError):
        ds.double_state_entanglement_spectrum(cylinder, 0.7, range(3))
