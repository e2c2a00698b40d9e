"""Dense Jordan-Wigner fermions for small oracles.

Mode ``j`` is qubit ``j`` (the most significant bit first, as in ``pauli``),
``c_j = Z...Z |0><1|_j`` so ``|1>`` is occupied.  Majoranas are
``g_{2j} = c_j + c_j^dag`` and ``g_{2j+1} = -i (c_j - c_j^dag)``, hence
``c_j = (g_{2j} + i g_{2j+1}) / 2`` and ``i g_{2j} g_{2j+1} = 2 n_j - 1``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .pauli import ResourceError

DENSE_MODE_CAP = 10

_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.diag([1.0, -1.0]).astype(complex)
_I = np.eye(2, dtype=complex)
_LOWER = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|


def _check(n: int, cap: int = DENSE_MODE_CAP) -> None:
    if n > cap:
        raise ResourceError(f"dense fermion oracle on {n} modes exceeds cap {cap}")


def _kron(factors) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for f in factors:
        out = np.kron(out, f)
    return out


@lru_cache(maxsize=16)
def annihilators(n: int) -> tuple:
    _check(n)
    return tuple(_kron([_Z] * j + [_LOWER] + [_I] * (n - j - 1)) for j in range(n))


@lru_cache(maxsize=16)
def majoranas(n: int) -> tuple:
    out = []
    for c in annihilators(n):
        out.append(c + c.conj().T)
        out.append(-1j * (c - c.conj().T))
    return tuple(out)


def parity(n: int) -> np.ndarray:
    return _kron([_Z] * n)


def covariance_of(rho: np.ndarray, n: int) -> np.ndarray:
    """``M_jk = -i tr(rho (g_j g_k - delta_jk))``."""
    g = majoranas(n)
    M = np.zeros((2 * n, 2 * n))
    for j in range(2 * n):
        gj = rho @ g[j]
        for k in range(j + 1, 2 * n):
            v = -1j * np.trace(gj @ g[k])
            M[j, k] = v.real
            M[k, j] = -v.real
    return M


def state_covariance(psi: np.ndarray, n: int) -> np.ndarray:
    return covariance_of(np.outer(psi, psi.conj()), n)


def quadratic(K: np.ndarray, n: int) -> np.ndarray:
    """Dense ``(i/2) g^T K g`` for a real antisymmetric ``K``."""
    g = majoranas(n)
    H = np.zeros((1 << n, 1 << n), dtype=complex)
    for j in range(2 * n):
        for k in range(2 * n):
            if K[j, k] != 0:
                H += K[j, k] * (g[j] @ g[k])
    return 0.5j * H


_SMALL_NORMAL_FORM = 64


def _normal_form_small(M: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    dim = M.shape[0]
    w, V = np.linalg.eigh(1j * M)
    cols, nus = [], []
    for idx in np.where(w > tol)[0]:
        v = V[:, idx]
        a, b = np.sqrt(2) * v.real, np.sqrt(2) * v.imag
        cols += [b, a]
        nus.append(w[idx])
    # the kernel of a real antisymmetric matrix has a real orthonormal basis
    n_zero = dim - 2 * len(nus)
    if n_zero:
        ker = sla.null_space(M, rcond=tol) if n_zero < dim else np.eye(dim)
        if ker.shape[1] != n_zero:
            # near-degenerate case: complete the basis from the spanned columns
            span = np.array(cols).T if cols else np.zeros((dim, 0))
            ker = sla.null_space(span.T) if span.size else np.eye(dim)
        for k in range(0, n_zero, 2):
            cols += [ker[:, k], ker[:, k + 1]]
            nus.append(0.0)
    return np.array(cols).T.reshape(dim, dim), np.array(nus)


def normal_form(M: np.ndarray, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Real orthogonal ``O`` and ``nu >= 0`` with ``O.T @ M @ O`` block diagonal.

    Block ``k`` is ``[[0, nu_k], [-nu_k, 0]]`` on rows ``2k, 2k+1``.  Large
    matrices go through the real symmetric ``M^T M``, whose eigenspaces are
    invariant under ``M``; each (near-)degenerate cluster is then reduced
    exactly by a small complex decomposition.
    """
    M = np.asarray(M, dtype=float)
    dim = M.shape[0]
    if dim % 2:
        raise ValueError("antisymmetric matrix must have even dimension")
    if dim <= _SMALL_NORMAL_FORM:
        return _normal_form_small(M, tol)
    w, V = np.linalg.eigh(M.T @ M)
    scale = max(1.0, float(w[-1]))
    breaks = np.where(np.diff(w) > 1e-9 * scale)[0] + 1
    edges = [0, *breaks.tolist(), dim]
    O = np.empty((dim, dim))
    nus = []
    start, col = 0, 0
    for stop in edges[1:]:
        if (stop - start) % 2:
            continue  # odd cluster: merge with the next one
        Vc = V[:, start:stop]
        Oc, nc = _normal_form_small(Vc.T @ M @ Vc, tol)
        O[:, col:col + stop - start] = Vc @ Oc
        nus.extend(nc.tolist())
        col += stop - start
        start = stop
    if start != dim:
        raise np.linalg.LinAlgError("could not pair the spectrum of an antisymmetric matrix")
    return O, np.array(nus)


def gram_spectrum(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(x, V)`` with ``M^T M = V diag(x^2) V^T``; ``x`` are the ``|nu|`` of ``iM``."""
    M = np.asarray(M, dtype=float)
    w, V = np.linalg.eigh(M.T @ M)
    return np.sqrt(np.clip(w, 0.0, None)), V


def _over_x(f, x: np.ndarray, tiny: float = 1e-7) -> np.ndarray:
    out = np.empty_like(x)
    small = x < tiny
    out[~small] = f(x[~small]) / x[~small]
    out[small] = f(tiny) / tiny  # odd f: f(x)/x is even and flat at 0
    return out


def odd_function(M: np.ndarray, f, spectrum=None) -> np.ndarray:
    """``-i f(iM)`` for an odd ``f``, as ``M h(M^T M)`` with ``h(s) = f(sqrt s)/sqrt s``."""
    x, V = gram_spectrum(M) if spectrum is None else spectrum
    R = np.asarray(M, dtype=float) @ ((V * _over_x(f, x)) @ V.T)
    return 0.5 * (R - R.T)


def even_function(M: np.ndarray, f, spectrum=None) -> np.ndarray:
    """``f(iM)`` for an even ``f``; real symmetric."""
    x, V = gram_spectrum(M) if spectrum is None else spectrum
    R = (V * f(x)) @ V.T
    return 0.5 * (R + R.T)


def gaussian_density(M: np.ndarray) -> np.ndarray:
    """Dense density matrix with Majorana covariance ``M`` (pure or mixed)."""
    n = M.shape[0] // 2
    _check(n)
    O, nu = normal_form(M)
    g = majoranas(n)
    rho = np.eye(1 << n, dtype=complex)
    for k in range(n):
        ga = sum(O[j, 2 * k] * g[j] for j in range(2 * n))
        gb = sum(O[j, 2 * k + 1] * g[j] for j in range(2 * n))
        rho = rho @ (np.eye(1 << n) - nu[k] * 1j * ga @ gb) / 2
    return rho


def pure_state(M: np.ndarray) -> np.ndarray:
    rho = gaussian_density(M)
    w, V = np.linalg.eigh(rho)
    return V[:, -1]


def basis_state(bits) -> np.ndarray:
    n = len(bits)
    idx = int("".join(str(int(b)) for b in bits), 2) if n else 0
    psi = np.zeros(1 << n, dtype=complex)
    psi[idx] = 1.0
    return psi


def majorana_monomial(n: int, subset) -> np.ndarray:
    g = majoranas(n)
    out = np.eye(1 << n, dtype=complex)
    for j in subset:
        out = out @ g[j]
    return out


def reduced_operator(rho: np.ndarray, n: int, modes) -> np.ndarray:
    """The restriction of ``rho`` to ``modes`` as an operator on the full space.

    Built from the expectation of every Majorana monomial on those modes, so
    it is ``rho_X`` tensored with the identity on the rest, up to a scale.
    """
    majs = [m for j in sorted(modes) for m in (2 * j, 2 * j + 1)]
    out = np.zeros_like(rho, dtype=complex)
    for mask in range(1 << len(majs)):
        sub = [majs[i] for i in range(len(majs)) if (mask >> i) & 1]
        G = majorana_monomial(n, sub)
        out += np.trace(rho @ G.conj().T) * G
    return out / (1 << n)


def hermitian_log(A: np.ndarray, floor: float = 1e-300) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (A + A.conj().T))
    return (V * np.log(np.maximum(w, floor))) @ V.conj().T
