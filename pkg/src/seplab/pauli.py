"""Pauli strings on n qubits in the symplectic (x, z) bit representation.

Conventions used by every dense routine in the package:

* qubit 0 is the most significant bit of a computational-basis index, so
  ``Z(0)`` on two qubits is ``diag(1, 1, -1, -1)``;
* a string is ``i**phase * prod_q X_q**x_q Z_q**z_q`` taken site by site,
  so the single-site factor for ``x = z = 1`` is ``XZ = -iY``;
* ``phase`` is an integer exponent of ``i`` modulo 4.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import reduce

import numpy as np

DENSE_QUBIT_CAP = 14

_PHASE_TEXT = {0: "+", 1: "+i", 2: "-", 3: "-i"}
_TEXT_PHASE = {"": 0, "+": 0, "+i": 1, "i": 1, "-": 2, "-i": 3}
_TOKEN = re.compile(r"^([XYZI])(\d+)$")


class ResourceError(RuntimeError):
    """A dense construction would exceed its configured size cap."""


@dataclass(frozen=True)
class PauliOperator:
    n_qubits: int
    x_mask: int
    z_mask: int
    phase: int = 0

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        full = (1 << self.n_qubits) - 1
        if (self.x_mask | self.z_mask) & ~full:
            raise ValueError("mask has bits beyond n_qubits")
        object.__setattr__(self, "phase", self.phase % 4)

    # bit q of a mask refers to qubit q
    def x_bits(self) -> np.ndarray:
        return np.array([(self.x_mask >> q) & 1 for q in range(self.n_qubits)], dtype=np.uint8)

    def z_bits(self) -> np.ndarray:
        return np.array([(self.z_mask >> q) & 1 for q in range(self.n_qubits)], dtype=np.uint8)

    @property
    def support(self) -> tuple[int, ...]:
        m = self.x_mask | self.z_mask
        return tuple(q for q in range(self.n_qubits) if (m >> q) & 1)

    @property
    def is_identity(self) -> bool:
        return self.x_mask == 0 and self.z_mask == 0

    def __mul__(self, other: "PauliOperator") -> "PauliOperator":
        return multiply(self, other)

    def __neg__(self) -> "PauliOperator":
        return PauliOperator(self.n_qubits, self.x_mask, self.z_mask, self.phase + 2)

    def scaled(self, power_of_i: int) -> "PauliOperator":
        return PauliOperator(self.n_qubits, self.x_mask, self.z_mask, self.phase + power_of_i)

    def dagger(self) -> "PauliOperator":
        # (X^x Z^z)^dag = Z^z X^x = (-1)^{x.z} X^x Z^z
        sign = 2 * (bin(self.x_mask & self.z_mask).count("1") % 2)
        return PauliOperator(self.n_qubits, self.x_mask, self.z_mask, -self.phase + sign)

    def hermitian_phase(self) -> "PauliOperator":
        """Same masks, phase chosen so the operator is Hermitian with sign +."""
        return PauliOperator(self.n_qubits, self.x_mask, self.z_mask,
                             bin(self.x_mask & self.z_mask).count("1"))

    def to_dense(self, cap: int = DENSE_QUBIT_CAP) -> np.ndarray:
        return to_dense(self, cap)

    def __str__(self) -> str:
        return to_text(self)


def identity(n: int) -> PauliOperator:
    return PauliOperator(n, 0, 0, 0)


def _single(letter: str, sites, n: int) -> PauliOperator:
    if isinstance(sites, int):
        sites = [sites]
    op = identity(n)
    for s in sites:
        if not 0 <= s < n:
            raise ValueError(f"site {s} out of range for {n} qubits")
        bit = 1 << s
        if letter == "X":
            f = PauliOperator(n, bit, 0)
        elif letter == "Z":
            f = PauliOperator(n, 0, bit)
        else:  # Y = i X Z
            f = PauliOperator(n, bit, bit, 1)
        op = op * f
    return op


def X(sites, n: int) -> PauliOperator:
    return _single("X", sites, n)


def Y(sites, n: int) -> PauliOperator:
    return _single("Y", sites, n)


def Z(sites, n: int) -> PauliOperator:
    return _single("Z", sites, n)


def _popcount(v: int) -> int:
    return bin(v).count("1")


def multiply(a: PauliOperator, b: PauliOperator) -> PauliOperator:
    """Exact product ``a @ b``.

    Moving ``Z^{z_a}`` past ``X^{x_b}`` on each site costs ``(-1)^{z_a x_b}``.
    """
    if a.n_qubits != b.n_qubits:
        raise ValueError(f"qubit count mismatch: {a.n_qubits} vs {b.n_qubits}")
    sign = 2 * (_popcount(a.z_mask & b.x_mask) % 2)
    # X^{xa} X^{xb} = X^{xa^xb} and likewise for Z, no further phases
    return PauliOperator(a.n_qubits, a.x_mask ^ b.x_mask, a.z_mask ^ b.z_mask,
                         a.phase + b.phase + sign)


def symplectic_form(a: PauliOperator, b: PauliOperator) -> int:
    if a.n_qubits != b.n_qubits:
        raise ValueError(f"qubit count mismatch: {a.n_qubits} vs {b.n_qubits}")
    return (_popcount(a.x_mask & b.z_mask) + _popcount(a.z_mask & b.x_mask)) % 2


def commutes(a: PauliOperator, b: PauliOperator) -> bool:
    return symplectic_form(a, b) == 0


def product(ops) -> PauliOperator:
    ops = list(ops)
    if not ops:
        raise ValueError("empty product needs an explicit identity")
    return reduce(multiply, ops)


def to_dense(p: PauliOperator, cap: int = DENSE_QUBIT_CAP) -> np.ndarray:
    perm, vals = row_action(p, cap)
    out = np.zeros((perm.size, perm.size), dtype=complex)
    out[np.arange(perm.size), perm] = vals
    return out


def to_text(p: PauliOperator) -> str:
    tokens = []
    for q in range(p.n_qubits):
        x, z = (p.x_mask >> q) & 1, (p.z_mask >> q) & 1
        if x and z:
            tokens.append(f"Y{q}")
        elif x:
            tokens.append(f"X{q}")
        elif z:
            tokens.append(f"Z{q}")
    # printed letters mean Hermitian Y, so fold the XZ = -iY phases back out
    phase = (p.phase - _popcount(p.x_mask & p.z_mask)) % 4
    body = " ".join(tokens) if tokens else "I"
    return f"{_PHASE_TEXT[phase]}{body}"


def from_text(text: str, n_qubits: int) -> PauliOperator:
    """Parse ``"+X0 Z3 Z4"``, ``"-iY2"`` or ``"+I"``.

    Repeated sites multiply left to right.
    """
    s = text.strip()
    m = re.match(r"^([+-]?i?)\s*(.*)$", s)
    sign_txt, body = m.group(1), m.group(2)
    if sign_txt not in _TEXT_PHASE:
        raise ValueError(f"bad phase prefix in {text!r}")
    op = identity(n_qubits).scaled(_TEXT_PHASE[sign_txt])
    for tok in body.split():
        if tok == "I":
            continue
        t = _TOKEN.match(tok)
        if t is None:
            raise ValueError(f"bad token {tok!r} in {text!r}")
        letter, site = t.group(1), int(t.group(2))
        if site >= n_qubits:
            raise ValueError(f"site {site} out of range for {n_qubits} qubits")
        if letter != "I":
            op = op * _single(letter, site, n_qubits)
    return op


def random_pauli(n: int, rng: np.random.Generator) -> PauliOperator:
    full = 1 << n
    return PauliOperator(n, int(rng.integers(full)), int(rng.integers(full)), int(rng.integers(4)))


def row_action(p: PauliOperator, cap: int = DENSE_QUBIT_CAP) -> tuple[np.ndarray, np.ndarray]:
    """``(perm, vals)`` with ``to_dense(p) @ M == vals[:, None] * M[perm]``.

    Applying a string this way costs O(dim) per column instead of a matmul.
    """
    n = p.n_qubits
    if n > cap:
        raise ResourceError(f"dense action on {n} qubits exceeds cap {cap}")
    idx = np.arange(1 << n)
    xm = sum(1 << (n - 1 - q) for q in range(n) if (p.x_mask >> q) & 1)
    zm = sum(1 << (n - 1 - q) for q in range(n) if (p.z_mask >> q) & 1)
    perm = idx ^ xm
    parity = _parity(perm & zm)
    vals = (1j ** p.phase) * (1 - 2 * parity)
    if p.phase % 2 == 0:
        vals = vals.real
    return perm, vals


def _parity(v: np.ndarray) -> np.ndarray:
    v = v.copy()
    out = np.zeros_like(v)
    while np.any(v):
        out ^= v & 1
        v >>= 1
    return out


def apply_left(p: PauliOperator, M: np.ndarray) -> np.ndarray:
    perm, vals = row_action(p)
    return vals.reshape((-1,) + (1,) * (M.ndim - 1)) * M[perm]


def trace_with(M: np.ndarray, p: PauliOperator) -> complex:
    """``tr(M @ to_dense(p))`` in O(dim)."""
    perm, vals = row_action(p)
    # (M P)[b, b] = M[b, perm[b]] * vals[perm[b]]
    idx = np.arange(M.shape[0])
    return complex(np.sum(M[idx, perm] * vals[perm]))
