import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seplab import gibbs, models
from seplab.gibbs import CommutingProjectorModel
from seplab.pauli import X, Z


@pytest.fixture(scope="module")
def cluster4():
    return models.cluster_1d(4)


def test_cluster_model_is_valid(cluster4):
    assert gibbs.validate_model(cluster4.model).ok


def test_non_commuting_pair_reported():
    m = CommutingProjectorModel(1, [X(0, 1), Z(0, 1)], [Z(0, 1), X(0, 1)])
    rep = gibbs.validate_model(m)
    assert not rep.ok
    assert (0, 1) in rep.non_commuting_pairs


def test_levin_gu_is_valid():
    lg = models.levin_gu(3)
    assert gibbs.validate_model(lg.model).ok


def test_beta_examples():
    lm = models.cluster_1d(3)
    assert gibbs.decohere_ground_state(lm.model, 0.5).beta == 0.0
    assert math.isinf(gibbs.decohere_ground_state(lm.model, 0.0).beta)
    # atanh(1 - 2 * 0.109) = atanh(0.782)
    assert gibbs.beta_from_rate(0.109) == pytest.approx(1.0504, abs=1e-4)


def test_rate_out_of_range(cluster4):
    with pytest.raises(ValueError):
        gibbs.decohere_ground_state(cluster4.model, 0.6)
    with pytest.raises(ValueError):
        gibbs.decohere_ground_state(cluster4.model, -0.1)


def test_channel_equals_gibbs_cluster8(cluster4):
    gd = gibbs.decohere_ground_state(cluster4.model, 0.3)
    rho = gibbs.dense_channel_oracle(cluster4.model, 0.3)
    assert np.max(np.abs(rho - gd.to_dense())) < 1e-10
    assert np.max(np.abs(rho - gd.exponential_dense())) < 1e-10


def test_unequal_rates(cluster4):
    rates = cluster4.rates(a=0.1, b=0.35)
    gd = gibbs.decohere_ground_state(cluster4.model, rates)
    rho = gibbs.dense_channel_oracle(cluster4.model, rates)
    assert np.max(np.abs(rho - gd.exponential_dense())) < 1e-10


def test_p_zero_is_pure(cluster4):
    rho = gibbs.dense_channel_oracle(cluster4.model, 0.0)
    assert np.trace(rho @ rho).real == pytest.approx(1.0, abs=1e-12)


def test_kitaev_chain_becomes_gibbs():
    k6 = models.kitaev_chain(6)
    gd = gibbs.decohere_ground_state(k6.model, 0.2)
    rho = gibbs.dense_channel_oracle(k6.model, 0.2)
    assert np.max(np.abs(rho - gd.exponential_dense())) < 1e-10
    assert math.tanh(gd.beta) == pytest.approx(0.6, abs=1e-14)


def test_order_irrelevance(cluster4):
    rng = np.random.default_rng(3)
    order = rng.permutation(cluster4.model.n_terms)
    a = gibbs.dense_channel_oracle(cluster4.model, 0.27)
    b = gibbs.dense_channel_oracle(cluster4.model, 0.27, order=list(order))
    assert np.max(np.abs(a - b)) < 1e-12


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 0.5))
def test_trace_preserved(p):
    lm = models.cluster_1d(3)
    rho = gibbs.dense_channel_oracle(lm.model, p)
    assert abs(np.trace(rho) - 1) < 1e-12


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 3.0))
def test_exponentiation_identity(beta):
    # prod_j [cosh b - sinh b h_j] = exp(-b sum h_j) uses h_j^2 = 1
    lm = models.cluster_1d(2)
    dim = 1 << lm.n_qubits
    prod = np.eye(dim, dtype=complex)
    H = np.zeros((dim, dim), dtype=complex)
    for t in lm.model.terms:
        T = gibbs.dense(t)
        prod = prod @ (math.cosh(beta) * np.eye(dim) - math.sinh(beta) * T)
        H += T
    w, V = np.linalg.eigh(H)
    expo = (V * np.exp(-beta * w)) @ V.conj().T
    assert np.max(np.abs(prod - expo)) < 1e-9 * max(1.0, np.max(np.abs(expo)))


def test_zn_two_matches_z2():
    rep = gibbs.zn_channel_to_gibbs(gibbs.zn_ring(4, 2), 0.2)
    assert rep.is_gibbs
    # Z2: weight of each satisfied projector is 2 beta with tanh beta = 1 - 2p
    assert rep.fitted_weight == pytest.approx(2 * math.atanh(0.6), abs=1e-8)


def test_zn_three_is_gibbs():
    rep = gibbs.zn_channel_to_gibbs(gibbs.zn_ring(3, 3), 0.2)
    assert rep.is_gibbs
    assert rep.max_deviation < 1e-10
    assert rep.max_commutator < 1e-10


def test_zn_four_refuted():
    rep = gibbs.zn_channel_to_gibbs(gibbs.zn_ring(3, 4), 0.2)
    assert not rep.is_gibbs


def test_zn_p_zero_unchanged():
    rep = gibbs.zn_channel_to_gibbs(gibbs.zn_ring(3, 3), 0.0)
    assert rep.max_deviation < 1e-10


def test_zn_cap():
    from seplab.pauli import ResourceError
    with pytest.raises(ResourceError):
        gibbs.zn_ring(7, 3)


def test_model_text_round_trip(cluster4):
    text = gibbs.dumps_model(cluster4.model)
    back = gibbs.loads_model(text)
    assert back.terms == cluster4.model.terms
    assert back.flips == cluster4.model.flips


def test_model_text_errors():
    with pytest.raises(ValueError):
        gibbs.loads_model("+X0 ; +Z0\n")
    with pytest.raises(ValueError):
        gibbs.loads_model("n_qubits 1\n+X0 +Z0\n")
