import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seplab import pauli
from seplab.pauli import PauliOperator, ResourceError, X, Y, Z


def paulis(n):
    full = (1 << n) - 1
    return st.builds(PauliOperator, st.just(n), st.integers(0, full), st.integers(0, full),
                     st.integers(0, 3))


def test_xz_is_minus_i_y():
    assert X(0, 1) * Z(0, 1) == Y(0, 1).scaled(3)


def test_identity_is_neutral():
    p = pauli.from_text("+X0 Z2", 3)
    assert p * pauli.identity(3) == p
    assert pauli.identity(3) * p == p


def test_disjoint_square_is_identity():
    p = X(0, 2) * Z(1, 2)
    sq = p * p
    assert sq.is_identity and sq.phase == 0


def test_commutes_examples():
    assert pauli.commutes(X([0, 1], 2), Z([0, 1], 2))
    assert not pauli.commutes(X(0, 1), Z(0, 1))
    assert pauli.commutes(Y(3, 5), pauli.identity(5))


def test_dense_examples():
    np.testing.assert_array_equal(X(0, 1).to_dense(), [[0, 1], [1, 0]])
    np.testing.assert_array_equal(Z(0, 2).to_dense(), np.diag([1, 1, -1, -1]))


def test_size_mismatch():
    with pytest.raises(ValueError):
        pauli.multiply(X(0, 1), X(0, 2))
    with pytest.raises(ValueError):
        pauli.commutes(X(0, 1), X(0, 2))


def test_dense_cap():
    with pytest.raises(ResourceError):
        pauli.to_dense(X(0, 15))


def test_multiply_matches_dense_100_pairs():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        a, b = pauli.random_pauli(6, rng), pauli.random_pauli(6, rng)
        d = pauli.to_dense(a * b) - pauli.to_dense(a) @ pauli.to_dense(b)
        worst = max(worst, float(np.max(np.abs(d))))
    assert worst < 1e-12


@given(paulis(4), paulis(4), paulis(4))
def test_associative(a, b, c):
    assert (a * b) * c == a * (b * c)


@given(paulis(4))
def test_square_is_plus_minus_identity(a):
    sq = a * a
    assert sq.is_identity and sq.phase in (0, 2)


@given(paulis(4), paulis(4))
def test_commutation_sign(a, b):
    ab, ba = a * b, b * a
    expected = ba if pauli.commutes(a, b) else -ba
    assert ab == expected


@settings(max_examples=50)
@given(paulis(4), paulis(4))
def test_dense_faithful(a, b):
    np.testing.assert_allclose(pauli.to_dense(a * b), pauli.to_dense(a) @ pauli.to_dense(b),
                               atol=1e-12)


@given(paulis(5))
def test_text_round_trip(a):
    assert pauli.from_text(pauli.to_text(a), 5) == a


def test_text_examples():
    p = pauli.from_text("+X0 Z3 Z4", 5)
    assert pauli.to_text(p) == "+X0 Z3 Z4"
    assert pauli.to_text(pauli.from_text("-iY2", 3)) == "-iY2"
    assert pauli.from_text("+I", 2).is_identity


@settings(max_examples=30)
@given(paulis(4))
def test_dense_is_unitary(a):
    U = pauli.to_dense(a)
    np.testing.assert_allclose(U @ U.conj().T, np.eye(16), atol=1e-12)


@settings(max_examples=30)
@given(paulis(4))
def test_row_action_matches_dense(a):
    M = np.arange(16 * 3, dtype=float).reshape(16, 3)
    np.testing.assert_allclose(pauli.apply_left(a, M), pauli.to_dense(a) @ M, atol=1e-12)
