"""Local decoherence of commuting-stabilizer ground states and its Gibbs form.

A model is a list of commuting terms ``h_j`` with ``h_j**2 = I`` plus flips
``O_j`` that anticommute with their own term and commute with every other
term.  The ground state ``prod_j (I - h_j) / 2**n`` subjected to the channels
``rho -> (1 - p_j) rho + p_j O_j rho O_j^dag`` becomes
``prod_j [I - (1 - 2 p_j) h_j]``, normalised, i.e. a Gibbs state of
``sum_j beta_j h_j`` with ``tanh(beta_j) = 1 - 2 p_j``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .pauli import PauliOperator, ResourceError, apply_left, commutes, from_text, to_text

ORACLE_QUBIT_CAP = 12
ZN_DIM_CAP = 2000


@dataclass(frozen=True, eq=False)
class DenseTerm:
    """A term that is not a single Pauli string, stored as a dense matrix."""

    n_qubits: int
    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (1 << self.n_qubits,) * 2:
            raise ValueError("matrix shape does not match n_qubits")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def to_dense(self, cap: int = ORACLE_QUBIT_CAP) -> np.ndarray:
        if self.n_qubits > cap:
            raise ResourceError(f"{self.n_qubits} qubits exceeds cap {cap}")
        return self.matrix


Term = Union[PauliOperator, DenseTerm]


def dense(op: Term, cap: int = ORACLE_QUBIT_CAP) -> np.ndarray:
    return op.to_dense(cap)


def left_multiply(op: Term, M: np.ndarray) -> np.ndarray:
    """``op @ M`` using the signed-permutation form of Pauli strings."""
    if isinstance(op, PauliOperator):
        return apply_left(op, M)
    return op.to_dense() @ M


def conjugate(op: Term, rho: np.ndarray) -> np.ndarray:
    """``op @ rho @ op^dag`` for Hermitian ``rho``."""
    return left_multiply(op, left_multiply(op, rho).conj().T)


def _identity(n_qubits: int, cap: int) -> np.ndarray:
    if n_qubits > cap:
        raise ResourceError(f"{n_qubits} qubits exceeds oracle cap {cap}")
    return np.eye(1 << n_qubits, dtype=complex)


@dataclass(frozen=True)
class CommutingProjectorModel:
    n_qubits: int
    terms: tuple
    flips: tuple
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "flips", tuple(self.flips))
        if len(self.terms) != len(self.flips):
            raise ValueError("terms and flips must have equal length")
        for op in self.terms + self.flips:
            if op.n_qubits != self.n_qubits:
                raise ValueError("operator size does not match model")

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    @property
    def is_pauli(self) -> bool:
        return all(isinstance(t, PauliOperator) for t in self.terms + self.flips)


@dataclass
class ValidationReport:
    non_commuting_pairs: list = field(default_factory=list)
    not_involutory: list = field(default_factory=list)
    flip_violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.non_commuting_pairs or self.not_involutory or self.flip_violations)

    def __str__(self) -> str:
        if self.ok:
            return "valid"
        parts = []
        if self.non_commuting_pairs:
            parts.append(f"non-commuting term pairs {self.non_commuting_pairs}")
        if self.not_involutory:
            parts.append(f"terms not squaring to +I {self.not_involutory}")
        if self.flip_violations:
            parts.append(f"flip violations {self.flip_violations}")
        return "invalid: " + "; ".join(parts)


def _pair_relation(a: Term, b: Term, tol: float) -> int:
    """+1 if commuting, -1 if anticommuting, 0 otherwise."""
    if isinstance(a, PauliOperator) and isinstance(b, PauliOperator):
        return 1 if commutes(a, b) else -1
    A, B = dense(a), dense(b)
    ab, ba = A @ B, B @ A
    if np.max(np.abs(ab - ba)) < tol:
        return 1
    if np.max(np.abs(ab + ba)) < tol:
        return -1
    return 0


def _squares_to_identity(t: Term, tol: float) -> bool:
    if isinstance(t, PauliOperator):
        sq = t * t
        return sq.is_identity and sq.phase == 0
    A = dense(t)
    return np.max(np.abs(A @ A - np.eye(A.shape[0]))) < tol


def validate_model(m: CommutingProjectorModel, tol: float = 1e-12) -> ValidationReport:
    rep = ValidationReport()
    n = m.n_terms
    for j, k in itertools.combinations(range(n), 2):
        if _pair_relation(m.terms[j], m.terms[k], tol) != 1:
            rep.non_commuting_pairs.append((j, k))
    for j, t in enumerate(m.terms):
        if not _squares_to_identity(t, tol):
            rep.not_involutory.append(j)
    for j, o in enumerate(m.flips):
        for k, t in enumerate(m.terms):
            want = -1 if j == k else 1
            if _pair_relation(o, t, tol) != want:
                rep.flip_violations.append((j, k))
    return rep


def _rates(m: CommutingProjectorModel, p) -> np.ndarray:
    rates = np.broadcast_to(np.asarray(p, dtype=float), (m.n_terms,)).copy()
    if np.any(rates < 0) or np.any(rates > 0.5):
        raise ValueError("decoherence rates must lie in [0, 0.5]")
    return rates


def beta_from_rate(p: float) -> float:
    """Nishimori coupling: tanh(beta) = 1 - 2p, infinite at p = 0."""
    if not 0.0 <= p <= 0.5:
        raise ValueError("rate must lie in [0, 0.5]")
    t = 1.0 - 2.0 * p
    return math.inf if t >= 1.0 else math.atanh(t)


@dataclass(frozen=True)
class GibbsDescriptor:
    factors: tuple
    betas: tuple
    model: CommutingProjectorModel

    @property
    def beta(self) -> float:
        if len(set(self.betas)) != 1:
            raise ValueError("rates are not uniform; use betas")
        return self.betas[0]

    def to_dense(self) -> np.ndarray:
        """Normalised ``prod_j [I - f_j h_j]``."""
        rho = _identity(self.model.n_qubits, ORACLE_QUBIT_CAP)
        for f, t in zip(self.factors, self.model.terms):
            rho = rho - f * left_multiply(t, rho)
        return rho / np.trace(rho)

    def exponential_dense(self) -> np.ndarray:
        """``exp(-sum_j beta_j h_j) / Z`` built by spectral exponentiation.

        Infinite couplings are handled by restricting to the ``h_j = -1``
        eigenspace of those terms first.
        """
        dim = 1 << self.model.n_qubits
        proj = np.eye(dim, dtype=complex)
        H = np.zeros((dim, dim), dtype=complex)
        for b, t in zip(self.betas, self.model.terms):
            if math.isinf(b):
                proj = proj @ (np.eye(dim) - dense(t)) / 2
            else:
                H += b * dense(t)
        w, v = np.linalg.eigh(H)
        w = w - w.min()
        rho = (v * np.exp(-w)) @ v.conj().T
        rho = proj @ rho @ proj
        return rho / np.trace(rho)


def decohere_ground_state(m: CommutingProjectorModel, p) -> GibbsDescriptor:
    rep = validate_model(m)
    if not rep.ok:
        raise ValueError(f"model fails validation: {rep}")
    rates = _rates(m, p)
    factors = tuple(float(1 - 2 * r) for r in rates)
    betas = tuple(beta_from_rate(float(r)) for r in rates)
    return GibbsDescriptor(factors, betas, m)


def ground_state_dense(m: CommutingProjectorModel, cap: int = ORACLE_QUBIT_CAP) -> np.ndarray:
    rho = _identity(m.n_qubits, cap)
    for t in m.terms:
        rho = (rho - left_multiply(t, rho)) / 2
    tr = np.trace(rho).real
    if tr < 0.5:
        raise ValueError("terms have no common -1 eigenspace")
    return rho / tr


def dense_channel_oracle(m: CommutingProjectorModel, p, order: Sequence[int] | None = None,
                         cap: int = ORACLE_QUBIT_CAP) -> np.ndarray:
    """Apply every single-flip channel to the dense ground state."""
    rep = validate_model(m)
    if not rep.ok:
        raise ValueError(f"model fails validation: {rep}")
    rates = _rates(m, p)
    rho = ground_state_dense(m, cap)
    for j in (range(m.n_terms) if order is None else order):
        if rates[j] == 0:
            continue
        rho = (1 - rates[j]) * rho + rates[j] * conjugate(m.flips[j], rho)
    return rho


# ---- Z_N clock generalisation -------------------------------------------------


def clock_matrices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Shift ``X|k> = |k+1>`` and clock ``Z|k> = w^k |k>``; ``Z X = w X Z``."""
    w = np.exp(2j * np.pi / n)
    Xc = np.roll(np.eye(n, dtype=complex), 1, axis=0)
    Zc = np.diag(w ** np.arange(n))
    return Xc, Zc


def _embed(ops: dict, n_sites: int, d: int) -> np.ndarray:
    mats = [ops.get(s, np.eye(d, dtype=complex)) for s in range(n_sites)]
    out = mats[0]
    for a in mats[1:]:
        out = np.kron(out, a)
    return out


@dataclass(frozen=True, eq=False)
class ClockModel:
    """Commuting unitary terms with ``h**N = 1`` and flips ``K h K^dag = w h``."""

    n_sites: int
    n_clock: int
    terms: tuple
    flips: tuple

    @property
    def dim(self) -> int:
        return self.n_clock ** self.n_sites


def zn_ring(n_sites: int, n_clock: int) -> ClockModel:
    """Ring with ``h_i = Z_{i-1} X_i Z_{i+1}`` and flips ``K_i = Z_i``."""
    if n_sites < 3:
        raise ValueError("ring needs at least three sites")
    if n_clock ** n_sites > ZN_DIM_CAP:
        raise ResourceError(f"dimension {n_clock ** n_sites} exceeds cap {ZN_DIM_CAP}")
    Xc, Zc = clock_matrices(n_clock)
    terms, flips = [], []
    for i in range(n_sites):
        left, right = (i - 1) % n_sites, (i + 1) % n_sites
        terms.append(_embed({left: Zc, i: Xc, right: Zc}, n_sites, n_clock))
        flips.append(_embed({i: Zc}, n_sites, n_clock))
    return ClockModel(n_sites, n_clock, tuple(terms), tuple(flips))


@dataclass
class ZNReport:
    n_clock: int
    p: float
    max_commutator: float
    max_deviation: float
    fitted_weight: float
    weight_residual: float
    is_gibbs: bool

    def __str__(self) -> str:
        verdict = "GIBBS" if self.is_gibbs else "NOT GIBBS"
        return (f"{verdict} N={self.n_clock} p={self.p:g} maxdev={self.max_deviation:.3e} "
                f"weight={self.fitted_weight:.6g} residual={self.weight_residual:.3e}")


def zn_channel_to_gibbs(model: ClockModel, p: float, tol: float = 1e-10) -> ZNReport:
    """Apply the clock channel on every site and test for a Gibbs form in ``{P_i}``.

    ``P_i = (1/N) sum_n h_i**n`` projects onto ``h_i = 1``.  The output is
    projected by least squares onto the algebra spanned by the products
    ``prod_{i in S} P_i prod_{i not in S} (1 - P_i)``; a Gibbs state of
    ``-w sum_i P_i`` has coefficients ``c_S`` proportional to ``exp(w |S|)``.
    """
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    if model.dim > ZN_DIM_CAP:
        raise ResourceError(f"dimension {model.dim} exceeds cap {ZN_DIM_CAP}")
    N, dim = model.n_clock, model.dim
    eye = np.eye(dim, dtype=complex)
    projs = []
    for h in model.terms:
        acc, hp = np.zeros_like(eye), eye.copy()
        for _ in range(N):
            acc += hp
            hp = hp @ h
        projs.append(acc / N)
    rho = eye.copy()
    for P in projs:
        rho = rho @ P
    rho /= np.trace(rho)
    for K in model.flips:
        Kd = K.conj().T
        rho = (1 - p) * rho + (p / 2) * (K @ rho @ Kd + Kd @ rho @ K)
    max_comm = max(float(np.max(np.abs(rho @ P - P @ rho))) for P in projs)

    basis, sizes = [], []
    for S in itertools.product((0, 1), repeat=len(projs)):
        B = eye.copy()
        for bit, P in zip(S, projs):
            B = B @ (P if bit else eye - P)
        basis.append(B.ravel())
        sizes.append(sum(S))
    A = np.array(basis).T
    coef, *_ = np.linalg.lstsq(A, rho.ravel(), rcond=None)
    fit = (A @ coef).reshape(dim, dim)
    dev = float(np.max(np.abs(fit - rho)))

    c = coef.real
    sizes = np.array(sizes)
    pos = c > 1e-300
    if pos.sum() >= 2 and len(set(sizes[pos])) >= 2:
        slope, icpt = np.polyfit(sizes[pos], np.log(c[pos]), 1)
        resid = float(np.max(np.abs(np.log(c[pos]) - (slope * sizes[pos] + icpt))))
        # any vanishing coefficient with non-vanishing neighbours breaks the form
        if not pos.all():
            resid = math.inf
    else:
        slope, resid = math.inf, 0.0
    return ZNReport(N, p, max_comm, dev, float(slope), resid,
                    bool(dev < tol and max_comm < tol and resid < 1e-8))


# ---- model files ---------------------------------------------------------------


def dumps_model(m: CommutingProjectorModel) -> str:
    if not m.is_pauli:
        raise ValueError("only Pauli models have a text form")
    lines = [f"# {m.name}" if m.name else "# model", f"n_qubits {m.n_qubits}"]
    for t, o in zip(m.terms, m.flips):
        lines.append(f"{to_text(t)} ; {to_text(o)}")
    return "\n".join(lines) + "\n"


def loads_model(text: str, name: str = "") -> CommutingProjectorModel:
    """Parse ``n_qubits <n>`` followed by ``<term> ; <flip>`` lines."""
    n, terms, flips = None, [], []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("n_qubits"):
            n = int(line.split()[1])
            continue
        if n is None:
            raise ValueError("n_qubits must precede the term lines")
        if ";" not in line:
            raise ValueError(f"expected '<term> ; <flip>', got {raw!r}")
        t, o = line.split(";")
        terms.append(from_text(t, n))
        flips.append(from_text(o, n))
    if n is None:
        raise ValueError("missing n_qubits line")
    return CommutingProjectorModel(n, terms, flips, name)
