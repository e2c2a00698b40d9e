"""Fermionic Choi-Jamiolkowski double states.

The doubled system has ``2N`` modes: ket modes ``c_j`` (``0..N-1``) then bra
modes ``d_j`` (``N..2N-1``), with Majoranas ``g`` (ket) and ``eta`` (bra).
The reference state ``|Phi>`` is annihilated by ``c_j - d_j^dag`` and
``d_j + c_j^dag``, which makes the transport rules

    |rho c> = d^dag |rho>,      |rho c^dag> = -d |rho>

hold for parity-even ``rho``.  Its covariance pairs ``g_{2j}`` with
``eta_{2j+1}`` and ``g_{2j+1}`` with ``eta_{2j}``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import fermion as fm
from . import gaussian as ga
from .pauli import ResourceError

log = logging.getLogger(__name__)

SQRT = "sqrt"
LINEAR = "linear"


class ParityError(ValueError):
    """The input operator does not commute with fermion parity."""


def _pair_swap(n: int) -> np.ndarray:
    return np.kron(np.eye(n), np.array([[0.0, 1.0], [1.0, 0.0]]))


@dataclass(frozen=True)
class DoubledGaussianState:
    """Pure ``4N x 4N`` covariance; ket Majoranas first, then bra Majoranas."""

    gamma: np.ndarray
    n_modes: int
    mode: str

    @property
    def ket_block(self) -> np.ndarray:
        k = 2 * self.n_modes
        return self.gamma[:k, :k]

    @property
    def bra_block(self) -> np.ndarray:
        k = 2 * self.n_modes
        return self.gamma[k:, k:]

    def purity_defect(self) -> float:
        G = self.gamma
        return float(np.max(np.abs(G @ G + np.eye(G.shape[0]))))

    def site_majoranas(self, sites: Sequence[int]) -> np.ndarray:
        """Site-major Majorana indices: ``g_{2s}, g_{2s+1}, eta_{2s}, eta_{2s+1}`` per site."""
        N = self.n_modes
        return np.array([i for s in sites for i in (2 * s, 2 * s + 1, 2 * N + 2 * s, 2 * N + 2 * s + 1)])


def reference_covariance(n: int) -> np.ndarray:
    X = _pair_swap(n)
    Z = np.zeros((2 * n, 2 * n))
    return np.block([[Z, X], [-X, Z]])


def squared_state_covariance(M: np.ndarray) -> np.ndarray:
    """Covariance of ``rho^2 / tr(rho^2)``: ``2M (I - M^2)^-1``."""
    I = np.eye(M.shape[0])
    return 2 * M @ np.linalg.inv(I - M @ M)


def purify_covariance(M: ga.MajoranaCovariance, mode: str = LINEAR) -> DoubledGaussianState:
    """Covariance of ``|rho^(1/2)>`` (``mode="sqrt"``) or ``|rho>`` (``mode="linear"``).

    For ``sqrt`` the ket block is ``M`` itself.  ``|rho>`` purifies
    ``rho^2`` instead, so its ket block is ``2M (I - M^2)^-1``.
    """
    if mode not in (SQRT, LINEAR):
        raise ValueError(f"unknown purification mode {mode!r}")
    Mk = M.matrix if mode == SQRT else squared_state_covariance(M.matrix)
    n = M.n_modes
    X = _pair_swap(n)
    # sqrt(I + Mk^2) = sqrt(I - Mk^T Mk), an even function of iMk
    S = fm.even_function(Mk, lambda x: np.sqrt(np.clip(1 - x * x, 0.0, None)))
    gamma = np.block([[Mk, S @ X], [-X @ S, -X @ Mk @ X]])
    return DoubledGaussianState(gamma, n, mode)


# ---- dense machinery ----------------------------------------------------------------


def reference_state_dense(n: int, cap: int = 5) -> np.ndarray:
    """``|Phi>`` on ``2n`` modes as the common null vector of its annihilators."""
    if 2 * n > 2 * cap:
        raise ResourceError(f"{n} modes exceeds the dense double-state cap {cap}")
    c = fm.annihilators(2 * n)
    S = np.zeros((1 << (2 * n), 1 << (2 * n)), dtype=complex)
    for j in range(n):
        for op in (c[j] - c[n + j].conj().T, c[n + j] + c[j].conj().T):
            S += op.conj().T @ op
    w, V = np.linalg.eigh(S)
    if w[0] > 1e-10 or w[1] < 1e-6:
        raise RuntimeError("reference state is not uniquely defined")
    psi = V[:, 0]
    return psi / psi[np.argmax(np.abs(psi))] * abs(psi[np.argmax(np.abs(psi))])


def ket_operator(op: np.ndarray, n: int) -> np.ndarray:
    """An operator on the ket modes as an operator on the doubled space."""
    return np.kron(op, np.eye(1 << n))


def double_state_dense(rho: np.ndarray, n: int, mode: str = LINEAR, normalize: bool = True) -> np.ndarray:
    if mode == SQRT:
        w, V = np.linalg.eigh(0.5 * (rho + rho.conj().T))
        rho = (V * np.sqrt(np.maximum(w, 0))) @ V.conj().T
    psi = ket_operator(rho, n) @ reference_state_dense(n)
    return psi / np.linalg.norm(psi) if normalize else psi


def is_parity_even(op: np.ndarray, n: int, tol: float = 1e-12) -> bool:
    P = fm.parity(n)
    return bool(np.max(np.abs(P @ op @ P - op)) < tol)


def random_even_density(n: int, rng: np.random.Generator) -> np.ndarray:
    dim = 1 << n
    A = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = A @ A.conj().T
    P = fm.parity(n)
    rho = 0.5 * (rho + P @ rho @ P)
    return rho / np.trace(rho)


@dataclass
class TransportReport:
    n_modes: int
    right_annihilator: float
    right_creator: float
    left_kraus: float

    @property
    def max_deviation(self) -> float:
        return max(self.right_annihilator, self.right_creator, self.left_kraus)

    def ok(self, tol: float = 1e-12) -> bool:
        return self.max_deviation < tol


def cj_transport_rules_dense(rho: np.ndarray, n: int, cap: int = 3) -> TransportReport:
    """Check ``|rho c> = d^dag|rho>``, ``|rho c^dag> = -d|rho>`` and ``|K rho> = K|rho>``."""
    if n > cap:
        raise ResourceError(f"{n} modes exceeds the transport-check cap {cap}")
    if not is_parity_even(rho, n):
        raise ParityError("transport rules need a parity-preserving rho")
    phi = reference_state_dense(n)
    c_small = fm.annihilators(n)
    c_big = fm.annihilators(2 * n)
    state = ket_operator(rho, n) @ phi
    e1 = e2 = e3 = 0.0
    for j in range(n):
        cj = c_small[j]
        dj = c_big[n + j]
        lhs = ket_operator(rho @ cj, n) @ phi
        e1 = max(e1, float(np.max(np.abs(lhs - dj.conj().T @ state))))
        lhs = ket_operator(rho @ cj.conj().T, n) @ phi
        e2 = max(e2, float(np.max(np.abs(lhs + dj @ state))))
        for K in (cj, cj.conj().T, fm.majoranas(n)[2 * j]):
            lhs = ket_operator(K @ rho, n) @ phi
            e3 = max(e3, float(np.max(np.abs(lhs - ket_operator(K, n) @ state))))
    return TransportReport(n, e1, e2, e3)


@dataclass
class NaiveMapReport:
    naive_idempotency_defect: float
    channel_idempotency_defect: float
    corrected_vs_channel: float
    naive_vs_channel: float


def _superop_norm(A: np.ndarray) -> float:
    return float(np.linalg.norm(A, 2))


def naive_map_counterexample(p: float = 0.5, n_random: int = 5,
                             rng: np.random.Generator | None = None) -> NaiveMapReport:
    """One mode: ``(1-p) + p g eta_0`` versus the true channel ``(1-p) rho + p g rho g``."""
    rng = rng or np.random.default_rng(0)
    g = fm.majoranas(1)[0]
    big = fm.majoranas(2)
    G, eta0, eta1 = big[0], big[2], big[3]
    I4 = np.eye(4)
    naive = (1 - p) * I4 + p * G @ eta0
    corrected = (1 - p) * I4 + p * (-1j) * G @ eta1
    nd = _superop_norm(naive @ naive - naive)

    def channel(r):
        return (1 - p) * r + p * g @ r @ g

    # the channel as a matrix on vectorised operators
    basis = [np.eye(2)[:, [a]] @ np.eye(2)[[b], :] for a in range(2) for b in range(2)]
    E = np.array([channel(b).reshape(-1) for b in basis]).T
    cd = _superop_norm(E @ E - E)
    dev_c = dev_n = 0.0
    for _ in range(n_random):
        rho = random_even_density(1, rng)
        target = double_state_dense(channel(rho), 1, LINEAR, normalize=False)
        start = double_state_dense(rho, 1, LINEAR, normalize=False)
        dev_c = max(dev_c, float(np.max(np.abs(corrected @ start - target))))
        dev_n = max(dev_n, float(np.max(np.abs(naive @ start - target))))
    return NaiveMapReport(nd, cd, dev_c, dev_n)


def corrected_channel_operator(n: int, p: float) -> np.ndarray:
    """``prod_j [(1-p) + p(-i g_j eta'_j)]`` over all ``2n`` ket Majoranas, densely.

    For ``g_{2j}`` the partner is ``eta_{2j+1}`` (``|rho g_{2j}> = -i eta_{2j+1}|rho>``);
    for ``g_{2j+1}`` it is ``eta_{2j}`` (``|rho g_{2j+1}> = -i eta_{2j}|rho>``).
    """
    big = fm.majoranas(2 * n)
    dim = 1 << (2 * n)
    out = np.eye(dim, dtype=complex)
    for j in range(n):
        ge, go = big[2 * j], big[2 * j + 1]
        ee, eo = big[2 * n + 2 * j], big[2 * n + 2 * j + 1]
        for k_op in (ge @ eo, go @ ee):
            out = ((1 - p) * np.eye(dim) + p * (-1j) * k_op) @ out
    return out


def doubled_channel_check(M: ga.MajoranaCovariance, p: float, cap: int = 3) -> float:
    """Dense corrected CJ operator on ``|rho>`` versus ``purify(apply_majorana_channel(M, p))``."""
    n = M.n_modes
    if n > cap:
        raise ResourceError(f"{n} modes exceeds cap {cap}")
    rho = fm.gaussian_density(M.matrix)
    psi = corrected_channel_operator(n, p) @ double_state_dense(rho, n, LINEAR, normalize=False)
    psi /= np.linalg.norm(psi)
    G = fm.state_covariance(psi, 2 * n)
    want = purify_covariance(ga.apply_majorana_channel(M, p), LINEAR).gamma
    return float(np.max(np.abs(G - want)))


# ---- fermionic transpose -------------------------------------------------------------


def _monomial_coefficients(rho: np.ndarray, n: int) -> dict:
    out = {}
    majs = list(range(2 * n))
    for mask in range(1 << (2 * n)):
        sub = tuple(majs[i] for i in range(2 * n) if (mask >> i) & 1)
        G = fm.majorana_monomial(n, sub)
        v = np.trace(rho @ G.conj().T) / (1 << n)
        if abs(v) > 1e-15:
            out[sub] = v
    return out


def fermionic_transpose_dense(rho: np.ndarray, n: int, cap: int = 3,
                              even_only: bool = True) -> np.ndarray:
    """``<m'|rho^T|m> = (<m'|_1 <Phi_23|) rho_2 (|Phi_12> |m>_3)`` on three mode blocks.

    Every state is built by fermionic operators acting on the global vacuum
    in the order (block 1, block 2, block 3), so all reordering signs come
    from the Jordan-Wigner strings.
    """
    if n > cap:
        raise ResourceError(f"{n} modes exceeds the transpose cap {cap}")
    if even_only and not is_parity_even(rho, n):
        raise ParityError("fermionic transpose implemented for parity-even operators")
    tot = 3 * n
    g = fm.majoranas(tot)
    c = fm.annihilators(tot)
    # the contraction needs the unnormalised pairing state, sum over 2^n terms
    phi = reference_state_dense(n) * math.sqrt(1 << n)
    vac = np.zeros(1 << n)
    vac[0] = 1.0
    ket12 = np.kron(phi, vac)             # Phi on blocks 1,2; vacuum on block 3
    ket23 = np.kron(vac, phi)             # vacuum on block 1; Phi on blocks 2,3
    rho2 = np.zeros((1 << tot, 1 << tot), dtype=complex)
    for sub, v in _monomial_coefficients(rho, n).items():
        op = np.eye(1 << tot, dtype=complex)
        for j in sub:
            op = op @ g[2 * n + j]
        rho2 += v * op

    def create(block, bits, state):
        for j in reversed(range(n)):
            if bits[j]:
                state = c[block * n + j].conj().T @ state
        return state

    out = np.zeros((1 << n, 1 << n), dtype=complex)
    for a in range(1 << n):
        ma = [(a >> (n - 1 - j)) & 1 for j in range(n)]
        right = rho2 @ create(2, ma, ket12)
        for b in range(1 << n):
            mb = [(b >> (n - 1 - j)) & 1 for j in range(n)]
            left = create(0, mb, ket23)
            out[b, a] = np.vdot(left, right)
    return out


def transpose_covariance_rule(M: np.ndarray) -> np.ndarray:
    """Covariance of the fermionic transpose predicted by the substitution rule.

    In the occupation basis the fermionic transpose is the plain transpose
    conjugated by ``exp(-i pi N / 2)``, which rotates each mode's Majorana
    pair by a quarter turn.
    """
    n = M.shape[0] // 2
    R = np.kron(np.eye(n), np.array([[0.0, -1.0], [1.0, 0.0]]))
    return R @ bosonic_transpose_covariance(M) @ R.T


def bosonic_transpose_covariance(M: np.ndarray) -> np.ndarray:
    """Covariance of the plain matrix transpose in the occupation basis: ``-D M D``."""
    d = np.ones(M.shape[0])
    d[1::2] = -1
    return -(d[:, None] * M * d[None, :])


# ---- entanglement spectrum -----------------------------------------------------------


def double_state_entanglement_spectrum(model: ga.BdgModel, p: float, rows: Sequence[int],
                                       mode: str = LINEAR) -> ga.Spectrum:
    """Spectrum of ``iM_L`` for the double state on the rows ``rows`` (ket and bra), resolved in ``k_x``."""
    if not 0 <= p <= 0.5:
        raise ValueError("p must lie in [0, 0.5]")
    M0 = ga.ground_state_covariance(model)
    ds = purify_covariance(ga.apply_majorana_channel(M0, p), mode)
    rows = sorted(rows)
    sites = [model.site(x, y) for y in rows for x in range(model.Lx)]
    idx = ds.site_majoranas(sites)
    iMA = 1j * ds.gamma[np.ix_(idx, idx)]
    t = np.tile(np.arange(model.Lx), len(rows))
    perp = np.repeat(np.arange(len(rows)), model.Lx)
    return ga.resolved_spectrum(iMA, t, perp, model.Lx, model.bc_x, orbitals=4)


def cylinder_gap(Lx: int, Ly: int, p: float, mode: str = LINEAR) -> float:
    model = ga.BdgModel(Lx, Ly, bc_x="antiperiodic", bc_y="open")
    return double_state_entanglement_spectrum(model, p, range(Ly // 2), mode).min_gap()
