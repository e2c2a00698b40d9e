"""Majorana-covariance engine for the decohered p+ip superconductor.

Conventions (shared with ``fermion``): mode ``j`` owns Majoranas ``2j`` and
``2j+1`` with ``c_j = (g_{2j} + i g_{2j+1}) / 2``.  A covariance is
``M_jk = -i <g_j g_k - delta_jk>``; the vacuum has ``M_{2j,2j+1} = +1``.
A Gaussian state ``rho ~ exp(-(i/2) g^T K g)`` has ``M = -i tanh(iK)``.
A quadratic Hamiltonian ``(i/4) g^T A g`` has ground state ``M = -i sign(iA)``.
Lattice sites are ordered ``x + Lx * y``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import fermion as fm
from .pauli import ResourceError

log = logging.getLogger(__name__)

CLIP_EPS = 1e-12
# overall factor of the single-particle modular commutator; fixed by the dense oracle
MODULAR_PREFACTOR = -1.0


class DegeneracyError(ValueError):
    """The single-particle spectrum has a (near) zero mode."""


class SingularModeError(ValueError):
    """A mixed-state generator was requested for a covariance with ``|nu| = 1``."""


# ---- covariance type ---------------------------------------------------------------


@dataclass(frozen=True)
class MajoranaCovariance:
    matrix: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] % 2:
            raise ValueError("covariance must be a square matrix of even size")
        if M.size and np.max(np.abs(M + M.T)) > 1e-10:
            raise ValueError("covariance is not antisymmetric")
        object.__setattr__(self, "matrix", 0.5 * (M - M.T))

    @property
    def n_modes(self) -> int:
        return self.matrix.shape[0] // 2

    def spectrum(self) -> np.ndarray:
        """Eigenvalues of ``iM`` in ascending order."""
        return np.linalg.eigvalsh(1j * self.matrix)

    def validate(self, tol: float = 1e-8) -> None:
        if self.matrix.size and np.max(np.abs(self.spectrum())) > 1 + tol:
            raise ValueError("eigenvalues of iM exceed 1")

    @property
    def is_pure(self) -> bool:
        M = self.matrix
        return bool(np.max(np.abs(M @ M + np.eye(M.shape[0]))) < 1e-8)

    def majorana_indices(self, modes: Sequence[int]) -> np.ndarray:
        return np.array([m for j in modes for m in (2 * j, 2 * j + 1)], dtype=int)

    def restrict(self, modes: Sequence[int]) -> "MajoranaCovariance":
        idx = self.majorana_indices(modes)
        return MajoranaCovariance(self.matrix[np.ix_(idx, idx)])


def vacuum_covariance(n: int) -> MajoranaCovariance:
    return MajoranaCovariance(np.kron(np.eye(n), np.array([[0.0, 1.0], [-1.0, 0.0]])))


def random_pure_covariance(n: int, rng: np.random.Generator) -> MajoranaCovariance:
    Q, R = np.linalg.qr(rng.normal(size=(2 * n, 2 * n)))
    Q = Q * np.sign(np.diag(R))
    return MajoranaCovariance(Q @ vacuum_covariance(n).matrix @ Q.T)


def random_mixed_covariance(n: int, rng: np.random.Generator, radius: float = 0.9) -> MajoranaCovariance:
    Q, _ = np.linalg.qr(rng.normal(size=(2 * n, 2 * n)))
    nu = rng.uniform(-radius, radius, n)
    nu[0] = radius
    blocks = np.kron(np.diag(nu), np.array([[0.0, 1.0], [-1.0, 0.0]]))
    return MajoranaCovariance(Q @ blocks @ Q.T)


# ---- lattice model -----------------------------------------------------------------

_BOUNDARY_SIGN = {"periodic": 1.0, "antiperiodic": -1.0, "open": 0.0}


@dataclass(frozen=True)
class BdgModel:
    """Square-lattice p+ip superconductor.

    ``H = sum -t (c+_{r+x} c_r + c+_{r+y} c_r + h.c.)
          + Delta (c+_{r+x} c+_r + i c+_{r+y} c+_r + h.c.) - (mu - 4t) c+_r c_r``.
    """

    Lx: int
    Ly: int
    t: float = 0.5
    delta: float = 0.5
    mu: float = 1.0
    bc_x: str = "antiperiodic"
    bc_y: str = "antiperiodic"

    def __post_init__(self):
        if self.Lx < 1 or self.Ly < 1:
            raise ValueError("lattice sizes must be positive")
        for bc in (self.bc_x, self.bc_y):
            if bc not in _BOUNDARY_SIGN:
                raise ValueError(f"unknown boundary condition {bc!r}")

    @property
    def n_sites(self) -> int:
        return self.Lx * self.Ly

    def site(self, x: int, y: int) -> int:
        return x + self.Lx * y

    def hopping_pairing(self) -> tuple[np.ndarray, np.ndarray]:
        """``(h, D)`` with ``H = c+ h c + (1/2) sum D_ab c+_a c+_b + h.c.``."""
        N = self.n_sites
        h = np.zeros((N, N), dtype=complex)
        D = np.zeros((N, N), dtype=complex)
        for y in range(self.Ly):
            for x in range(self.Lx):
                r = self.site(x, y)
                h[r, r] += -(self.mu - 4 * self.t)
                for dx, dy, pair, bc, L, coord in ((1, 0, self.delta, self.bc_x, self.Lx, x),
                                                   (0, 1, 1j * self.delta, self.bc_y, self.Ly, y)):
                    sign = 1.0
                    if coord + 1 == L:
                        sign = _BOUNDARY_SIGN[bc]
                        if sign == 0.0:
                            continue
                    s = self.site((x + dx) % self.Lx, (y + dy) % self.Ly)
                    h[s, r] += -self.t * sign
                    h[r, s] += -self.t * sign
                    D[s, r] += pair * sign
                    D[r, s] -= pair * sign
        return h, D

    def majorana_matrix(self) -> np.ndarray:
        """Real antisymmetric ``A`` with ``H = (i/4) g^T A g + const``."""
        return majorana_form(*self.hopping_pairing())

    def single_particle_energies(self) -> np.ndarray:
        return np.linalg.eigvalsh(1j * self.majorana_matrix())

    def momenta(self, axis: str) -> np.ndarray:
        L, bc = (self.Lx, self.bc_x) if axis == "x" else (self.Ly, self.bc_y)
        shift = 0.5 if bc == "antiperiodic" else 0.0
        return 2 * np.pi * (np.arange(L) + shift) / L

    def bloch(self, kx: float, ky: float) -> tuple[float, complex]:
        """``(xi_k, Delta_k)`` for ``H = sum xi c+_k c_k + 1/2 sum (Delta_k c+_k c+_-k + h.c.)``."""
        xi = -2 * self.t * (math.cos(kx) + math.cos(ky)) - (self.mu - 4 * self.t)
        # c+_{r+x} c+_r -> e^{-ik.x} and the antisymmetrised pairing gives a sine
        dk = -2j * self.delta * (math.sin(kx) + 1j * math.sin(ky))
        return xi, dk


def majorana_form(h: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Convert ``c+ h c + (1/2)(c+ D c+ + h.c.)`` into ``(i/4) g^T A g`` (constant dropped)."""
    hr, hi = h.real, h.imag
    Dr, Di = D.real, D.imag
    N = h.shape[0]
    A = np.zeros((2 * N, 2 * N))
    e, o = np.arange(0, 2 * N, 2), np.arange(1, 2 * N, 2)
    A[np.ix_(e, e)] = hi + Di
    A[np.ix_(o, o)] = hi - Di
    A[np.ix_(e, o)] = hr - Dr
    A[np.ix_(o, e)] = -(hr + Dr)
    return A


def ground_state_covariance(model: BdgModel, gap_tol: float = 1e-8) -> MajoranaCovariance:
    A = model.majorana_matrix()
    x, V = fm.gram_spectrum(A)
    # singular values from A^T A are resolved only down to ~sqrt(eps) |A|
    floor = max(gap_tol, 10 * math.sqrt(np.finfo(float).eps) * float(np.max(x)))
    if np.min(x) < floor:
        raise DegeneracyError(f"single-particle gap {np.min(x):.2e} below {floor:.1e}")
    # ground state of (i/4) g^T A g: M = -i sign(iA)
    return MajoranaCovariance(fm.odd_function(A, np.sign, (x, V)))


def ground_state_energy(model: BdgModel) -> float:
    """``<(i/4) g^T A g>`` in the ground state: half the sum of negative eigenvalues of ``iA``."""
    w = model.single_particle_energies()
    return 0.5 * float(np.sum(w[w < 0]))


def quadratic_expectation(A: np.ndarray, M: np.ndarray) -> float:
    """``<(i/4) g^T A g>`` for covariance ``M``."""
    return -0.25 * float(np.sum(A * M))


# ---- channel -----------------------------------------------------------------------


def channel_factor(p: float) -> float:
    if not 0 <= p <= 0.5:
        raise ValueError("p must lie in [0, 0.5]")
    return (1 - 2 * p) ** 2


def beta_from_rate(p: float) -> float:
    """``tanh(beta) = (1 - 2p)^2``."""
    f = channel_factor(p)
    return math.inf if f == 1 else math.atanh(f)


def apply_majorana_channel(M: MajoranaCovariance, p: float) -> MajoranaCovariance:
    """Every Majorana dephased by ``rho -> (1-p) rho + p g rho g``."""
    return MajoranaCovariance(channel_factor(p) * M.matrix)


def dense_channel_oracle_fermionic(rho: np.ndarray, n: int, p: float,
                                   cap: int = 5) -> tuple[np.ndarray, MajoranaCovariance]:
    """Apply the Kraus pair ``{sqrt(1-p) I, sqrt(p) g_j}`` for every Majorana densely."""
    if n > cap:
        raise ResourceError(f"{n} modes exceeds the dense channel cap {cap}")
    channel_factor(p)
    out = np.array(rho, dtype=complex)
    for g in fm.majoranas(n):
        out = (1 - p) * out + p * g @ out @ g
    return out, MajoranaCovariance(fm.covariance_of(out, n))


# ---- covariance <-> generator ------------------------------------------------------


@dataclass(frozen=True)
class GibbsGenerator:
    """``rho ~ exp(-(i/2) g^T K g)`` with ``K = O (theta (x) iY) O^T``.

    ``theta`` is ``inf`` for pure modes, which have no finite ``K``.
    """

    basis: np.ndarray
    theta: np.ndarray

    @property
    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.theta)))

    @property
    def K(self) -> np.ndarray:
        if not self.is_finite:
            raise SingularModeError("generator has infinite entries for pure modes")
        blocks = np.kron(np.diag(self.theta), np.array([[0.0, 1.0], [-1.0, 0.0]]))
        return self.basis @ blocks @ self.basis.T


def covariance_to_generator(M: MajoranaCovariance, allow_pure: bool = False,
                            tol: float = 1e-10) -> GibbsGenerator:
    """``K = -i atanh(iM)``; modes with ``|nu| = 1`` raise unless ``allow_pure``."""
    O, nu = fm.normal_form(M.matrix)
    sat = nu > 1 - tol
    if np.any(sat) and not allow_pure:
        raise SingularModeError(f"{int(sat.sum())} modes have |nu| = 1")
    theta = np.full(nu.shape, np.inf)
    theta[~sat] = np.arctanh(nu[~sat])
    return GibbsGenerator(O, theta)


def generator_to_covariance(K: np.ndarray) -> MajoranaCovariance:
    return MajoranaCovariance(fm.odd_function(np.asarray(K, dtype=float), np.tanh))


# ---- CDA states ----------------------------------------------------------------------


@dataclass
class ThoulessState:
    """``exp((1/2) sum Z_ab f+_a f+_b)|base>`` with ``f`` the relabelled modes."""

    base: np.ndarray
    Z: np.ndarray
    regularized: float = 0.0


def _nambu_transfer(K: np.ndarray) -> np.ndarray:
    """Row-vector propagator of annihilator coefficients on ``(c, c+)`` under ``e^{-H/2}``."""
    N = K.shape[0] // 2
    Om = np.zeros((2 * N, 2 * N), dtype=complex)
    j = np.arange(N)
    Om[2 * j, j] = 0.5
    Om[2 * j, N + j] = 0.5
    Om[2 * j + 1, j] = 0.5j
    Om[2 * j + 1, N + j] = -0.5j
    # a = v . g transforms as v -> exp(-iK) v under e^{-H/2} a e^{H/2}
    # exp(-iK) = cosh(iK) - sinh(iK)
    spec = fm.gram_spectrum(K)
    prop = fm.even_function(K, np.cosh, spec) - 1j * fm.odd_function(K, np.sinh, spec)
    return (np.linalg.solve(Om, prop @ Om)).T


def mobius_update(Z: np.ndarray, E: np.ndarray, shift: float = 0.0) -> np.ndarray:
    N = Z.shape[0]
    E11, E12, E21, E22 = E[:N, :N], E[:N, N:], E[N:, :N], E[N:, N:]
    den = E11 - Z @ E21 + shift * np.eye(N)
    Zn = np.linalg.solve(den, Z @ E22 - E12)
    return 0.5 * (Zn - Zn.T)


def relabel_signs(m: Sequence[int]) -> np.ndarray:
    """Majorana sign flips mapping ``|m>`` to the vacuum of relabelled modes."""
    d = np.ones(2 * len(m))
    d[1::2] = np.where(np.asarray(m) == 1, -1.0, 1.0)
    return d


def thouless_covariance(Z: np.ndarray) -> MajoranaCovariance:
    """Covariance of ``exp((1/2) c+ Z c+)|0>``; annihilators are ``c - Z c+``."""
    N = Z.shape[0]
    W = np.zeros((2 * N, N), dtype=complex)
    j = np.arange(N)
    # coefficient of c_j is 1 and of c+_b is -Z_jb; c = (g_e + i g_o)/2, c+ = (g_e - i g_o)/2
    W[2 * j, j] += 0.5
    W[2 * j + 1, j] += 0.5j
    W[0::2, :] += 0.5 * (-Z.T)
    W[1::2, :] += -0.5j * (-Z.T)
    Q, _ = np.linalg.qr(W)
    P = Q @ Q.conj().T
    # annihilator vectors span the -1 eigenspace of iM
    return MajoranaCovariance((-1j * (np.eye(2 * N) - 2 * P)).real)


@dataclass
class CDAResult:
    covariance: MajoranaCovariance
    thouless: ThoulessState
    regularized: float


def cda_state_covariance(K: np.ndarray, m: Sequence[int], reg: float = 1e-14) -> CDAResult:
    """Pure covariance of ``exp(-(i/4) g^T K g)|m>``, i.e. ``rho^(1/2)|m>``.

    Occupied modes are relabelled so the evolution always starts from a
    vacuum; the pairing matrix then follows one linear-fractional update.
    """
    K = np.asarray(K, dtype=float)
    if not np.all(np.isfinite(K)):
        raise ValueError("generator must be finite (p > 0); use the ground state at p = 0")
    m = np.asarray(m, dtype=int)
    if m.size * 2 != K.shape[0]:
        raise ValueError("occupation string length must equal the number of modes")
    d = relabel_signs(m)
    Kp = d[:, None] * K * d[None, :]
    E = _nambu_transfer(Kp)
    N = m.size
    Z0 = np.zeros((N, N), dtype=complex)
    shift = 0.0
    if np.linalg.cond(E[:N, :N]) > 1 / reg:
        shift = reg * float(np.linalg.norm(E[:N, :N], 2))
        log.warning("regularized singular Moebius denominator with shift %.2e", shift)
    Z = mobius_update(Z0, E, shift)
    Mp = thouless_covariance(Z).matrix
    M = d[:, None] * Mp * d[None, :]
    return CDAResult(MajoranaCovariance(M), ThoulessState(m, Z, shift), shift)


def decohered_generator(M0: MajoranaCovariance, p: float) -> np.ndarray:
    """``K`` of the decohered ground state; finite for ``p > 0``."""
    if p <= 0:
        raise ValueError("the decohered generator is finite only for p > 0")
    if channel_factor(p) == 0:
        return np.zeros_like(M0.matrix)
    M = apply_majorana_channel(M0, p).matrix
    spec = fm.gram_spectrum(M)
    if spec[0].max() > 1 - 1e-10:
        raise SingularModeError("decohered covariance has |nu| = 1 modes")
    return fm.odd_function(M, np.arctanh, spec)


def cda_dense_oracle(K: np.ndarray, m: Sequence[int], cap: int = 6) -> MajoranaCovariance:
    n = len(m)
    if n > cap:
        raise ResourceError(f"{n} modes exceeds the dense CDA cap {cap}")
    H = fm.quadratic(np.asarray(K), n)
    w, V = np.linalg.eigh(H)
    psi = (V * np.exp(-0.5 * w)) @ V.conj().T @ fm.basis_state(m)
    psi /= np.linalg.norm(psi)
    return MajoranaCovariance(fm.state_covariance(psi, n))


# ---- pairing function --------------------------------------------------------------


def bogoliubov(model: BdgModel, kx: float, ky: float) -> tuple[complex, complex, float]:
    """``(u, v, E)`` with ``alpha+_k = u c+_k + conj(v) c_-k`` at energy ``E > 0``."""
    xi, dk = model.bloch(kx, ky)
    Hk = np.array([[xi, dk], [np.conj(dk), -xi]])
    w, V = np.linalg.eigh(Hk)
    x, y = V[:, 1]
    return complex(x), complex(np.conj(y)), float(w[1])


def pairing_function(model: BdgModel, p: float, kx: float, ky: float) -> complex:
    """``h(k) = u v (e^-2b - 1) / (|u|^2 + |v|^2 e^-2b)`` with ``tanh(b) = (1-2p)^2``.

    ``rho^(1/2)|0> ~ prod_{pairs (k,-k)} (1 + h(k) c+_k c+_-k)|0>``.  The doubled
    exponent comes from ``n_k = n_-k`` on the even sector of each pair, so that
    ``exp(-b (n_k + n_-k)) = 1 + (e^-2b - 1) n_k`` there.
    """
    u, v, E = bogoliubov(model, kx, ky)
    beta = beta_from_rate(p)
    eb = 0.0 if math.isinf(beta) else math.exp(-2.0 * beta)
    den = abs(u) ** 2 + abs(v) ** 2 * eb
    if den < 1e-14:
        raise ZeroDivisionError(f"pairing function has a pole at k = ({kx:.4g}, {ky:.4g})")
    return u * v * (eb - 1) / den


def pairing_matrix(model: BdgModel, p: float) -> np.ndarray:
    """Real-space Thouless matrix ``Z`` of ``rho^(1/2)|0>`` built from ``h(k)``.

    ``exp((1/2) sum_k h(k) c+_k c+_-k)|0>`` with ``c+_k = N^-1/2 sum_r e^{ikr} c+_r``.
    """
    kx, ky = model.momenta("x"), model.momenta("y")
    hk = np.array([[pairing_function(model, p, a, b) for a in kx] for b in ky])  # [ky, kx]
    return _pair_real_space(model, hk)


def _pair_real_space(model: BdgModel, hk: np.ndarray) -> np.ndarray:
    g = _pair_grid(model, hk)
    Lx, Ly = model.Lx, model.Ly
    X = np.tile(np.arange(Lx), Ly)
    Y = np.repeat(np.arange(Ly), Lx)
    dX = X[:, None] - X[None, :]
    dY = Y[:, None] - Y[None, :]
    # a negative separation wraps once, picking up the boundary sign
    sx = np.where(dX < 0, _BOUNDARY_SIGN[model.bc_x], 1.0)
    sy = np.where(dY < 0, _BOUNDARY_SIGN[model.bc_y], 1.0)
    return g[dY % Ly, dX % Lx] * sx * sy


def _pair_grid(model: BdgModel, hk: np.ndarray) -> np.ndarray:
    kx, ky = model.momenta("x"), model.momenta("y")
    ex = np.exp(1j * np.outer(kx, np.arange(model.Lx)))
    ey = np.exp(1j * np.outer(ky, np.arange(model.Ly)))
    return (1.0 / model.n_sites) * ey.T @ hk @ ex


def pair_amplitude(model: BdgModel, p: float) -> np.ndarray:
    """``g(dx, dy) = Z_{(dx,dy),0}`` on the periodic grid, indexed ``[dy, dx]``."""
    kx, ky = model.momenta("x"), model.momenta("y")
    hk = np.array([[pairing_function(model, p, a, b) for a in kx] for b in ky])
    return _pair_grid(model, hk)


@dataclass
class DecayFit:
    preferred: str
    aic_power: float
    aic_exponential: float
    exponent: float
    length: float
    n_points: int

    @property
    def margin(self) -> float:
        return abs(self.aic_power - self.aic_exponential)


def fit_decay(r: np.ndarray, amp: np.ndarray, floor: float = 1e-12) -> DecayFit:
    """AIC comparison of ``ln|g| = a - b ln r`` and ``ln|g| = a - r / xi``."""
    r = np.asarray(r, dtype=float)
    a = np.abs(np.asarray(amp))
    keep = (r > 0) & (a > floor)
    r, y = r[keep], np.log(a[keep])
    n = r.size
    if n < 4:
        raise ValueError("too few points above the noise floor for a decay fit")

    def aic(x):
        A = np.stack([np.ones(n), x], 1)
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        rss = float(np.sum((A @ coef - y) ** 2))
        return n * math.log(max(rss, 1e-300) / n) + 4, coef

    aic_pow, cp = aic(np.log(r))
    aic_exp, ce = aic(r)
    xi = -1 / ce[1] if ce[1] < 0 else math.inf
    return DecayFit("power" if aic_pow < aic_exp else "exponential", aic_pow, aic_exp,
                    float(-cp[1]), float(xi), n)


def pairing_decay_fit(model: BdgModel, p: float, floor: float = 1e-12) -> DecayFit:
    """Decay law of the pair amplitude along the x axis out to half the torus."""
    g = pair_amplitude(model, p)
    r = np.arange(1, model.Lx // 2 + 1)
    return fit_decay(r, g[0, r], floor)


# ---- entanglement ------------------------------------------------------------------


@dataclass
class Spectrum:
    nu: np.ndarray                 # all eigenvalues of iM_A
    k: np.ndarray | None = None    # momentum per eigenvalue when resolved
    resolved: bool = False

    def min_gap(self) -> float:
        return float(np.min(np.abs(self.nu)))


def translation_matrix(Lx: int, Ly: int, axis: str, bc: str, orbitals: int = 2) -> np.ndarray:
    """Permutation (with boundary sign) shifting every site by one along ``axis``."""
    N = Lx * Ly
    T = np.zeros((N, N))
    sign = _BOUNDARY_SIGN[bc]
    for y in range(Ly):
        for x in range(Lx):
            if axis == "y":
                x2, y2, wrap = x, (y + 1) % Ly, y + 1 == Ly
            else:
                x2, y2, wrap = (x + 1) % Lx, y, x + 1 == Lx
            T[x2 + Lx * y2, x + Lx * y] = sign if wrap else 1.0
    return np.kron(T, np.eye(orbitals))


def resolved_spectrum(iMA: np.ndarray, t: np.ndarray, perp: np.ndarray, L: int, bc: str,
                      orbitals: int = 2, tol: float = 1e-8) -> Spectrum:
    """Block-diagonalise ``iM_A`` by Fourier transform along a translation axis.

    ``iMA`` is site-major with ``orbitals`` Majoranas per site; site ``s`` sits
    at coordinate ``t[s]`` along the axis and row ``perp[s]`` across it.  Falls
    back to the unresolved spectrum (with a warning) if blocks do not decouple.
    """
    t, perp = np.asarray(t), np.asarray(perp)
    n_perp = int(perp.max()) + 1
    if t.size != L * n_perp:
        log.warning("region is not a union of full lines; returning unresolved spectrum")
        return Spectrum(np.linalg.eigvalsh(iMA))
    shift = 0.5 if bc == "antiperiodic" else 0.0
    ks = 2 * np.pi * (np.arange(L) + shift) / L
    blk = n_perp * orbitals
    U = np.zeros((t.size * orbitals, L * blk), dtype=complex)
    for s in range(t.size):
        for o in range(orbitals):
            cols = np.arange(L) * blk + perp[s] * orbitals + o
            U[s * orbitals + o, cols] = np.exp(1j * ks * t[s]) / math.sqrt(L)
    B = U.conj().T @ iMA @ U
    nus, kk = [], []
    leak = 0.0
    for q in range(L):
        sl = slice(q * blk, (q + 1) * blk)
        row = B[sl, :].copy()
        row[:, sl] = 0
        leak = max(leak, float(np.max(np.abs(row))))
        w = np.linalg.eigvalsh(B[sl, sl])
        nus.append(w)
        kk.append(np.full(w.size, ks[q]))
    if leak > tol:
        log.warning("state not translation invariant (%.2e); unresolved spectrum", leak)
        return Spectrum(np.linalg.eigvalsh(iMA))
    return Spectrum(np.concatenate(nus), np.concatenate(kk), True)


def entanglement_spectrum(M: MajoranaCovariance, region: Sequence[int],
                          geometry: tuple | None = None, tol: float = 1e-8) -> Spectrum:
    """Eigenvalues of ``iM_A``; resolved in ``k_y`` when ``geometry = (Lx, Ly, bc_y)`` is given.

    The region must then be a union of full columns (every ``y`` for each
    included ``x``); otherwise the plain spectrum is returned with a warning.
    """
    region = np.asarray(sorted(region), dtype=int)
    if region.size == 0:
        raise ValueError("region must be nonempty")
    MA = M.restrict(region).matrix
    if geometry is None:
        return Spectrum(np.linalg.eigvalsh(1j * MA))
    Lx, Ly, bc = geometry
    xs = sorted({int(s) % Lx for s in region})
    col = {x: i for i, x in enumerate(xs)}
    t = region // Lx
    perp = np.array([col[int(s) % Lx] for s in region])
    full = sorted(x + Lx * y for y in range(Ly) for x in xs)
    if list(region) != full:
        log.warning("region is not a union of full columns; returning unresolved spectrum")
        return Spectrum(np.linalg.eigvalsh(1j * MA))
    return resolved_spectrum(1j * MA, t, perp, Ly, bc, 2, tol)


def strip_region(Lx: int, Ly: int, x_range: Sequence[int]) -> list[int]:
    return sorted(x + Lx * y for y in range(Ly) for x in x_range)


# ---- modular commutator ------------------------------------------------------------


@dataclass
class ModularResult:
    value: float
    clipped: int
    max_excess: float

    @property
    def flagged(self) -> bool:
        return self.max_excess > 1e-6

    def __float__(self) -> float:
        return self.value


def _clipped_generator(MX: np.ndarray, eps: float) -> tuple[np.ndarray, int, float]:
    w, V = np.linalg.eigh(1j * MX)
    lim = 1 - eps
    excess = float(max(0.0, np.max(np.abs(w)) - 1))
    n_clip = int(np.sum(np.abs(w) > lim))
    wc = np.clip(w, -lim, lim)
    return (-1j * (V * np.arctanh(wc)) @ V.conj().T).real, n_clip, excess


def modular_commutator(M: MajoranaCovariance, A: Sequence[int], B: Sequence[int],
                       C: Sequence[int], eps: float = CLIP_EPS) -> ModularResult:
    """``J = i tr(rho [ln rho_AC, ln rho_BC])`` evaluated as ``-tr([K_AC, K_BC] M_ABC)``.

    ``K_X = -i atanh(iM_X)`` embedded in ``ABC``; the overall sign is fixed
    by the dense oracle.  The definition is antisymmetric under ``A <-> B``.
    """
    A, B, C = (list(map(int, s)) for s in (A, B, C))
    if set(A) & set(B) or set(B) & set(C) or set(A) & set(C):
        raise ValueError("regions must be disjoint")
    ABC = A + B + C
    pos = {s: i for i, s in enumerate(ABC)}
    MABC = M.restrict(ABC).matrix
    dim = MABC.shape[0]

    def embedded(sites):
        idx = np.array([m for s in sites for m in (2 * pos[s], 2 * pos[s] + 1)])
        K, n, ex = _clipped_generator(MABC[np.ix_(idx, idx)], eps)
        out = np.zeros((dim, dim))
        out[np.ix_(idx, idx)] = K
        return out, n, ex

    K1, n1, e1 = embedded(A + C)
    K2, n2, e2 = embedded(B + C)
    J = MODULAR_PREFACTOR * float(np.trace((K1 @ K2 - K2 @ K1) @ MABC))
    if n1 + n2:
        log.info("modular commutator clipped %d eigenvalues at 1 - %.0e", n1 + n2, eps)
    return ModularResult(J, n1 + n2, max(e1, e2))


def modular_commutator_dense(M: MajoranaCovariance, A, B, C) -> float:
    """Dense ``i tr(rho [ln rho_AC, ln rho_BC])`` from Majorana-monomial reduced states."""
    n = M.n_modes
    rho = fm.gaussian_density(M.matrix)
    L1 = fm.hermitian_log(fm.reduced_operator(rho, n, list(A) + list(C)))
    L2 = fm.hermitian_log(fm.reduced_operator(rho, n, list(B) + list(C)))
    return float((1j * np.trace(rho @ (L1 @ L2 - L2 @ L1))).real)


@dataclass(frozen=True)
class Tripartition:
    """Three rectangles tiling an ``L/2`` square, ordered counterclockwise.

    ``B`` and ``C`` are the lower-left and lower-right quadrants, ``A`` the
    upper half.  With this ordering the chiral ground state gives ``J > 0``.
    """

    L: int

    def regions(self) -> tuple[list[int], list[int], list[int]]:
        L, h, q = self.L, self.L // 2, self.L // 4
        if L % 4:
            raise ValueError("L must be a multiple of 4")

        def block(x0, x1, y0, y1):
            return [x + L * y for y in range(y0, y1) for x in range(x0, x1)]

        B = block(0, q, 0, q)
        C = block(q, h, 0, q)
        A = block(0, h, q, h)
        return A, B, C


def cda_modular_commutator(L: int, p: float, m: Sequence[int] | str = "uniform",
                           seed: int = 0, model: BdgModel | None = None) -> ModularResult:
    """``J`` of ``rho^(1/2)|m>`` on an ``L x L`` antiperiodic torus."""
    model = model or BdgModel(L, L)
    N = model.n_sites
    bits = occupation(m, N, seed)
    M0 = ground_state_covariance(model)
    if p == 0:
        Mc = M0
    else:
        Mc = cda_state_covariance(decohered_generator(M0, p), bits).covariance
    A, B, C = Tripartition(L).regions()
    return modular_commutator(Mc, A, B, C)


def occupation(m: Sequence[int] | str, n: int, seed: int = 0) -> np.ndarray:
    if isinstance(m, str):
        if m == "uniform":
            return np.zeros(n, dtype=int)
        if m == "staggered":
            return np.arange(n) % 2
        if m == "random":
            return np.random.default_rng(seed).integers(0, 2, n)
        raise ValueError(f"unknown occupation pattern {m!r}")
    bits = np.asarray(m, dtype=int)
    if bits.size != n:
        raise ValueError("occupation string has the wrong length")
    return bits


def cda_entanglement_spectrum(Lx: int, Ly: int, p: float, bc_x: str = "antiperiodic",
                              bc_y: str = "antiperiodic") -> Spectrum:
    """Spectrum of ``rho^(1/2)|0>`` on the half torus ``x < Lx/2``, resolved in ``k_y``.

    The two edge branches of the chiral state cross at ``k_y = 0``, which is
    on the momentum grid only for a periodic ``y`` direction.
    """
    model = BdgModel(Lx, Ly, bc_x=bc_x, bc_y=bc_y)
    M0 = ground_state_covariance(model)
    Mc = M0 if p == 0 else cda_state_covariance(decohered_generator(M0, p),
                                                np.zeros(model.n_sites, int)).covariance
    return entanglement_spectrum(Mc, strip_region(Lx, Ly, range(Lx // 2)), (Lx, Ly, bc_y))
