"""Lattice stabilizer models, their symmetry sectors, and exact sector observables.

Qubit layouts (all periodic):

* ``cluster_1d(N)``: qubit ``2j`` is ``a_j``, qubit ``2j + 1`` is ``b_j``.
* ``cluster_2d(Lx, Ly)``: vertices ``x + Lx*y`` first, then horizontal edges
  ``(x, y)-(x+1, y)``, then vertical edges ``(x, y)-(x, y+1)``.
* ``cluster_3d(L)``: edges ``(r, d)`` from ``r`` to ``r + e_d`` first, then
  faces ``(r, n)`` with corner ``r`` and normal ``n``.
* ``kitaev_chain(N)``: one qubit per fermion mode through Jordan-Wigner.
* ``levin_gu(L)``: one qubit per site of an ``L x L`` triangular torus.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .gibbs import (CommutingProjectorModel, DenseTerm, GibbsDescriptor, decohere_ground_state,
                    dense, validate_model)
from .pauli import PauliOperator, X, Z, apply_left, commutes, identity, product, trace_with

SECTOR_QUBIT_CAP = 12


@dataclass(frozen=True)
class SectorLabel:
    charges: tuple

    def __post_init__(self):
        object.__setattr__(self, "charges", tuple(int(c) & 1 for c in self.charges))

    def __len__(self) -> int:
        return len(self.charges)


@dataclass(frozen=True, eq=False)
class LatticeModel:
    kind: str
    sizes: tuple
    model: CommutingProjectorModel
    generators: tuple
    generator_names: tuple
    term_groups: tuple
    qubit_names: tuple
    periodic: bool = True
    extras: dict = field(default_factory=dict)

    @property
    def n_qubits(self) -> int:
        return self.model.n_qubits

    def rates(self, **by_group: float) -> np.ndarray:
        """Per-term rates from group names, e.g. ``rates(a=0.1, b=0.2)``."""
        missing = set(self.term_groups) - set(by_group)
        if missing:
            raise ValueError(f"missing rates for groups {sorted(missing)}")
        return np.array([by_group[g] for g in self.term_groups], dtype=float)

    def term_index(self, group: str, key) -> int:
        return self.extras["term_index"][(group, key)]

    def qubit(self, name) -> int:
        return self.extras["qubit_index"][name]

    def check_generators(self) -> list:
        bad = []
        for gi, g in enumerate(self.generators):
            for ti, t in enumerate(self.model.terms):
                if isinstance(t, PauliOperator):
                    ok = commutes(g, t)
                else:
                    G, T = g.to_dense(), dense(t)
                    ok = np.max(np.abs(G @ T - T @ G)) < 1e-12
                if not ok:
                    bad.append((gi, ti))
        return bad

    def label(self, charges: Sequence[int]) -> SectorLabel:
        if len(charges) != len(self.generators):
            raise ValueError(f"need {len(self.generators)} charges, got {len(charges)}")
        return SectorLabel(tuple(charges))


def _finish(kind, sizes, n, terms, flips, groups, gens, gen_names, qnames, extras,
            check: bool = True) -> LatticeModel:
    cpm = CommutingProjectorModel(n, terms, flips, name=f"{kind}{sizes}")
    lm = LatticeModel(kind, tuple(sizes), cpm, tuple(gens), tuple(gen_names), tuple(groups),
                      tuple(qnames), True, extras)
    if check:
        rep = validate_model(cpm)
        if not rep.ok:
            raise RuntimeError(f"{kind} construction is invalid: {rep}")
        if lm.check_generators():
            raise RuntimeError(f"{kind} generators do not commute with terms")
    return lm


# ---- 1d cluster ------------------------------------------------------------------


def cluster_1d(n_cells: int) -> LatticeModel:
    if n_cells < 2:
        raise ValueError("cluster_1d needs at least 2 cells")
    N, n = n_cells, 2 * n_cells
    a = lambda j: 2 * (j % N)
    b = lambda j: 2 * (j % N) + 1
    terms, flips, groups, tidx = [], [], [], {}
    for j in range(N):
        tidx[("a", j)] = len(terms)
        terms.append(-(Z(b(j - 1), n) * X(a(j), n) * Z(b(j), n)))
        flips.append(Z(a(j), n))
        groups.append("a")
    for j in range(N):
        tidx[("b", j)] = len(terms)
        terms.append(-(Z(a(j), n) * X(b(j), n) * Z(a(j + 1), n)))
        flips.append(Z(b(j), n))
        groups.append("b")
    gens = [X([a(j) for j in range(N)], n), X([b(j) for j in range(N)], n)]
    qnames = [(s, j) for j in range(N) for s in ("a", "b")]
    qidx = {nm: i for i, nm in enumerate(qnames)}
    return _finish("cluster_1d", (N,), n, terms, flips, groups, gens, ("U_a", "U_b"), qnames,
                   {"term_index": tidx, "qubit_index": qidx})


def string_operator_1d(lm: LatticeModel, sub: str, j: int, k: int) -> PauliOperator:
    """``prod_{l=j..k} (-h_{sub,l})`` with indices taken mod N."""
    N = lm.sizes[0]
    ops = [-lm.model.terms[lm.term_index(sub, l % N)] for l in range(j, k + 1)]
    return product(ops) if ops else identity(lm.n_qubits)


def disorder_operator_1d(lm: LatticeModel, sub: str, j: int, k: int) -> PauliOperator:
    N = lm.sizes[0]
    return X([lm.qubit((sub, l % N)) for l in range(j, k + 1)], lm.n_qubits)


def zz_operator_1d(lm: LatticeModel, sub: str, j: int, k: int) -> PauliOperator:
    N = lm.sizes[0]
    return Z([lm.qubit((sub, j % N)), lm.qubit((sub, k % N))], lm.n_qubits)


# ---- 2d cluster ------------------------------------------------------------------


def cluster_2d(Lx: int, Ly: int) -> LatticeModel:
    if Lx < 2 or Ly < 2:
        raise ValueError("cluster_2d needs Lx, Ly >= 2")
    nv = Lx * Ly
    n = 3 * nv
    vid = lambda x, y: (x % Lx) + Lx * (y % Ly)
    hid = lambda x, y: nv + vid(x, y)
    uid = lambda x, y: 2 * nv + vid(x, y)
    edges = {}  # qubit -> (v1, v2)
    for y in range(Ly):
        for x in range(Lx):
            edges[hid(x, y)] = (vid(x, y), vid(x + 1, y))
            edges[uid(x, y)] = (vid(x, y), vid(x, y + 1))
    incident = {v: [] for v in range(nv)}
    for e, (v1, v2) in edges.items():
        incident[v1].append(e)
        incident[v2].append(e)
    terms, flips, groups, tidx = [], [], [], {}
    for v in range(nv):
        tidx[("v", v)] = len(terms)
        terms.append(-(X(v, n) * Z(incident[v], n)))
        flips.append(Z(v, n))
        groups.append("v")
    for e in sorted(edges):
        tidx[("e", e)] = len(terms)
        terms.append(-(X(e, n) * Z(list(edges[e]), n)))
        flips.append(Z(e, n))
        groups.append("e")
    plaquettes = []
    for y in range(Ly):
        for x in range(Lx):
            plaquettes.append((hid(x, y), hid(x, y + 1), uid(x, y), uid(x + 1, y)))
    gens = [X(list(range(nv)), n)] + [X(list(pl), n) for pl in plaquettes]
    names = ["U0"] + [f"U1_p{i}" for i in range(len(plaquettes))]
    qnames = [("v", v) for v in range(nv)] + [("e", e) for e in range(nv, n)]
    extras = {"term_index": tidx, "qubit_index": {nm: i for i, nm in enumerate(qnames)},
              "edges": edges, "plaquettes": plaquettes, "n_vertices": nv,
              "vertex_id": vid, "hedge_id": hid, "vedge_id": uid}
    return _finish("cluster_2d", (Lx, Ly), n, terms, flips, groups, gens, names, qnames, extras)


def membrane_2d(lm: LatticeModel, vertices: Sequence[int]) -> PauliOperator:
    """``M_S = prod_{v in S} (-h_v)``."""
    return product([-lm.model.terms[lm.term_index("v", v)] for v in vertices])


def string_2d(lm: LatticeModel, edges: Sequence[int]) -> PauliOperator:
    """``S_C = prod_{e in C} (-h_e)`` over edge qubits."""
    return product([-lm.model.terms[lm.term_index("e", e)] for e in edges])


# ---- 3d cluster ------------------------------------------------------------------


def cluster_3d(L: int, check: bool = True) -> LatticeModel:
    if L < 2:
        raise ValueError("cluster_3d needs L >= 2")
    ns = L ** 3
    n = 6 * ns
    sid = lambda r: (r[0] % L) + L * ((r[1] % L) + L * (r[2] % L))
    unit = [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
    add = lambda r, u, s=1: (r[0] + s * u[0], r[1] + s * u[1], r[2] + s * u[2])
    eid = lambda r, d: 3 * sid(r) + d
    fid = lambda r, nrm: 3 * ns + 3 * sid(r) + nrm
    sites = list(itertools.product(range(L), repeat=3))
    face_edges = {}
    for r in sites:
        for nrm in range(3):
            a, b = [d for d in range(3) if d != nrm]
            face_edges[fid(r, nrm)] = (eid(r, a), eid(add(r, unit[b]), a),
                                       eid(r, b), eid(add(r, unit[a]), b))
    edge_faces = {e: [] for e in range(3 * ns)}
    for f, es in face_edges.items():
        for e in es:
            edge_faces[e].append(f)
    terms, flips, groups, tidx = [], [], [], {}
    for e in range(3 * ns):
        tidx[("e", e)] = len(terms)
        terms.append(-(X(e, n) * Z(edge_faces[e], n)))
        flips.append(Z(e, n))
        groups.append("e")
    for f in sorted(face_edges):
        tidx[("f", f)] = len(terms)
        terms.append(-(X(f, n) * Z(list(face_edges[f]), n)))
        flips.append(Z(f, n))
        groups.append("f")
    gens, names = [], []
    for r in sites:
        # faces bounding the cube with corner r
        faces = [fid(r, k) for k in range(3)] + [fid(add(r, unit[k]), k) for k in range(3)]
        gens.append(X(faces, n))
        names.append(f"U1'_c{sid(r)}")
    for r in sites:
        star = [eid(r, d) for d in range(3)] + [eid(add(r, unit[d], -1), d) for d in range(3)]
        gens.append(X(star, n))
        names.append(f"U1_v{sid(r)}")
    qnames = [("e", e) for e in range(3 * ns)] + [("f", f) for f in range(3 * ns, n)]
    extras = {"term_index": tidx, "qubit_index": {nm: i for i, nm in enumerate(qnames)},
              "face_edges": face_edges, "edge_faces": edge_faces, "edge_id": eid, "face_id": fid}
    return _finish("cluster_3d", (L, L, L), n, terms, flips, groups, gens, names, qnames, extras,
                   check)


# ---- Kitaev chain ----------------------------------------------------------------


def jw_majorana(k: int, n_modes: int) -> PauliOperator:
    """Majorana ``k`` on ``n_modes`` modes: ``2j -> Z..Z X_j``, ``2j+1 -> Z..Z Y_j``."""
    j, odd = divmod(k, 2)
    op = Z(list(range(j)), n_modes) if j else identity(n_modes)
    tail = PauliOperator(n_modes, 1 << j, (1 << j) if odd else 0, 1 if odd else 0)
    return op * tail


def kitaev_chain(n_modes: int) -> LatticeModel:
    """Topological chain: terms ``-i g_{2j+1} g_{2j+2}`` pair Majoranas of neighbouring modes.

    In one-based labels shifted by one Majorana these are the ``-i g_{2j-1} g_{2j}``
    bilinears; the flip of each term is its first Majorana.
    """
    if n_modes < 2:
        raise ValueError("kitaev_chain needs at least 2 modes")
    n = n_modes
    terms, flips, groups = [], [], []
    for j in range(n):
        g1 = jw_majorana(2 * j + 1, n)
        g2 = jw_majorana((2 * j + 2) % (2 * n), n)
        terms.append((g1 * g2).scaled(-1))
        flips.append(g1)
        groups.append("m")
    parity = Z(list(range(n)), n)
    return _finish("kitaev_chain", (n,), n, terms, flips, groups, [parity], ("P_f",),
                   [("m", j) for j in range(n)], {"term_index": {("m", j): j for j in range(n)}})


# ---- Levin-Gu --------------------------------------------------------------------

_TRI_NEIGHBOURS = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)]


def _levin_gu_term(L: int, p: tuple) -> np.ndarray:
    n = L * L
    sid = lambda x, y: (x % L) + L * (y % L)
    nbrs = [sid(p[0] + dx, p[1] + dy) for dx, dy in _TRI_NEIGHBOURS]
    idx = np.arange(1 << n)
    bits = lambda q: (idx >> (n - 1 - q)) & 1
    # i^{(1 - z z')/2}: factor i whenever the two neighbours differ
    power = np.zeros(idx.size, dtype=np.int64)
    for k in range(6):
        power += bits(nbrs[k]) ^ bits(nbrs[(k + 1) % 6])
    diag = 1j ** (power % 4)
    perm = idx ^ (1 << (n - 1 - sid(*p)))
    M = np.zeros((idx.size, idx.size), dtype=complex)
    # (-X_p D)|b> = -D(b)|b ^ p>
    M[perm, idx] = -diag
    return M


def levin_gu(L: int) -> LatticeModel:
    if L < 3:
        raise ValueError("levin_gu needs L >= 3 so that the six neighbours are distinct")
    n = L * L
    if n > SECTOR_QUBIT_CAP:
        raise ValueError(f"levin_gu terms are dense; {n} qubits exceeds cap {SECTOR_QUBIT_CAP}")
    sites = [(x, y) for y in range(L) for x in range(L)]
    terms = [DenseTerm(n, _levin_gu_term(L, s), label=f"B_{s}") for s in sites]
    flips = [Z(i, n) for i in range(n)]
    gen = X(list(range(n)), n)
    return _finish("levin_gu", (L, L), n, terms, flips, ["p"] * n, [gen], ("U",),
                   [("p", i) for i in range(n)], {"term_index": {("p", i): i for i in range(n)}})


def build(kind: str, *sizes: int) -> LatticeModel:
    builders: dict[str, Callable[..., LatticeModel]] = {
        "cluster_1d": cluster_1d, "cluster_2d": cluster_2d, "cluster_3d": cluster_3d,
        "kitaev_chain": kitaev_chain, "levin_gu": levin_gu,
    }
    if kind not in builders:
        raise ValueError(f"unknown model kind {kind!r}")
    return builders[kind](*sizes)


# ---- closed forms (1d) ------------------------------------------------------------


def _tanh_from_rate(p: float) -> float:
    if not 0 <= p <= 0.5:
        raise ValueError("rate must lie in [0, 0.5]")
    return 1.0 - 2.0 * p


def string_order_1d_exact(p: float, length: int, n_cells: int | None = None,
                          charge: int = 0) -> float:
    """String order ``tanh(beta)**length`` with ``tanh(beta) = 1 - 2p``.

    With ``n_cells`` the value is the periodic-ring Ising correlator in the
    sector whose bond-sign product is ``(-1)**charge``:
    ``(t**l + s t**(N-l)) / (1 + s t**N)``.
    """
    if length < 0:
        raise ValueError("length must be non-negative")
    t = _tanh_from_rate(p)
    if length == 0:
        return 1.0
    if n_cells is None:
        return t ** length
    if length > n_cells:
        raise ValueError("string longer than the ring")
    s = -1.0 if charge & 1 else 1.0
    return (t ** length + s * t ** (n_cells - length)) / (1.0 + s * t ** n_cells)


def disorder_op_1d_exact(p: float, n_cells: int | None = None, u: int = 1) -> float:
    """``sech^2 beta = 1 - (1 - 2p)^2`` for a disorder segment in a CDA state.

    ``p`` is the rate of the terms anticommuting with the segment's two ends.
    With ``n_cells``, ``u`` is the eigenvalue of the product state under the
    X-string generator of the other sublattice, and the ring correction
    ``1 / (1 + u t**N)`` is included.  The sign of the expectation is the
    product-state eigenvalue of the segment itself.
    """
    t = _tanh_from_rate(p)
    val = 1.0 - t * t
    if n_cells is None:
        return val
    return val / (1.0 + u * t ** n_cells)


def ghz_order_1d_exact(p: float, n_cells: int | None = None, u: int = 1) -> float:
    """``|<Z_aj Z_ak>|`` in a CDA state with the b terms pure; same form as the disorder value.

    Here ``u`` is the product-state eigenvalue of the a-sublattice X-string, and the
    sign of the correlator is the product-state eigenvalue of the b sites between.
    """
    return disorder_op_1d_exact(p, n_cells, u)


# ---- dense sector computations -----------------------------------------------------


def decohered_state(lm: LatticeModel, rates) -> np.ndarray:
    if lm.n_qubits > SECTOR_QUBIT_CAP:
        raise ValueError(f"{lm.n_qubits} qubits exceeds dense cap {SECTOR_QUBIT_CAP}")
    return decohere_ground_state(lm.model, rates).to_dense()


def _subset_traces(rho: np.ndarray, gens, obs: PauliOperator | None):
    g = len(gens)
    out = {}
    base = obs if obs is not None else identity(gens[0].n_qubits)
    for G in itertools.product((0, 1), repeat=g):
        op = base
        for bit, u in zip(G, gens):
            if bit:
                op = op * u
        out[G] = trace_with(rho, op)
    return out


def _sector_trace(traces: dict, charges: tuple) -> float:
    g = len(charges)
    acc = 0.0
    for G, tr in traces.items():
        sign = (-1) ** sum(b & q for b, q in zip(G, charges))
        acc += sign * tr
    return float(np.real(acc)) / 2 ** g


def sector_probabilities_dense(lm: LatticeModel, rates, rho: np.ndarray | None = None) -> dict:
    """Probability of every charge assignment (empty sectors included as 0)."""
    rho = decohered_state(lm, rates) if rho is None else rho
    traces = _subset_traces(rho, lm.generators, None)
    return {q: _sector_trace(traces, q)
            for q in itertools.product((0, 1), repeat=len(lm.generators))}


def sector_probability_dense(lm: LatticeModel, rates, q: SectorLabel | Sequence[int]) -> float:
    q = q if isinstance(q, SectorLabel) else lm.label(q)
    return sector_probabilities_dense(lm, rates)[q.charges]


def sector_observable_dense(lm: LatticeModel, rates, q: SectorLabel | Sequence[int],
                            obs: PauliOperator, rho: np.ndarray | None = None) -> float:
    """``tr(rho_Q obs) / tr(rho_Q)`` for a symmetric observable."""
    q = q if isinstance(q, SectorLabel) else lm.label(q)
    for g, name in zip(lm.generators, lm.generator_names):
        if not commutes(g, obs):
            raise ValueError(f"observable does not commute with generator {name}")
    rho = decohered_state(lm, rates) if rho is None else rho
    den = _sector_trace(_subset_traces(rho, lm.generators, None), q.charges)
    if den <= 0:
        raise ValueError(f"sector {q.charges} has zero probability")
    num = _sector_trace(_subset_traces(rho, lm.generators, obs), q.charges)
    return num / den


def x_product_state(bits: Sequence[int]) -> np.ndarray:
    """``|m>`` with qubit q in ``|+>`` (bit 0) or ``|->`` (bit 1)."""
    plus = np.array([1.0, 1.0]) / math.sqrt(2)
    minus = np.array([1.0, -1.0]) / math.sqrt(2)
    v = np.array([1.0])
    for b in bits:
        v = np.kron(v, minus if b else plus)
    return v.astype(complex)


def cda_state_dense(lm: LatticeModel, rates, m_bits: Sequence[int]) -> np.ndarray:
    """Normalised ``exp(-sum_j beta_j h_j / 2) |m>`` from a dense spectral decomposition.

    Terms with infinite coupling act as the projector ``(I - h_j) / 2``.
    """
    if lm.n_qubits > 10:
        raise ValueError("cda_state_dense is limited to 10 qubits")
    gd: GibbsDescriptor = decohere_ground_state(lm.model, rates)
    psi = x_product_state(m_bits)
    dim = psi.size
    H = np.zeros((dim, dim), dtype=complex)
    for b, t in zip(gd.betas, lm.model.terms):
        if math.isinf(b):
            psi = (psi - dense(t) @ psi) / 2
        else:
            H += b * dense(t)
    w, v = np.linalg.eigh(H)
    psi = v @ (np.exp(-(w - w.min()) / 2) * (v.conj().T @ psi))
    nrm = np.linalg.norm(psi)
    if nrm < 1e-300:
        raise ValueError("product state is orthogonal to the decohered support")
    return psi / nrm


def expectation(psi: np.ndarray, op: PauliOperator) -> float:
    return float(np.real(np.vdot(psi, apply_left(op, psi))))


# ---- 2d stat-mech enumeration oracle ---------------------------------------------


def _spin_configs(n: int) -> np.ndarray:
    return 1 - 2 * ((np.arange(1 << n)[:, None] >> np.arange(n)[None, :]) & 1)


def cluster2d_statmech_tables(lm: LatticeModel, p_v: float, p_e: float):
    """Weights ``Z_gauge(x_v)`` and ``Z_Ising(x_e)`` for every coupling-sign pattern.

    ``Z_Ising(x_e) = sum_{z_v} exp(beta_e sum_e x_e z_v z_v')`` and
    ``Z_gauge(x_v) = sum_{z_e} exp(beta_v sum_v x_v prod_{e at v} z_e)``.
    Returns the sign tables, the weight tables and the spin tables.
    """
    if lm.kind != "cluster_2d":
        raise ValueError("needs a cluster_2d model")
    nv = lm.extras["n_vertices"]
    ne = lm.n_qubits - nv
    if ne > 12:
        raise ValueError("enumeration oracle limited to 12 edges")
    tv, te = _tanh_from_rate(p_v), _tanh_from_rate(p_e)
    bv = math.atanh(tv) if tv < 1 else math.inf
    be = math.atanh(te) if te < 1 else math.inf
    edges = [lm.extras["edges"][e] for e in range(nv, nv + ne)]
    xv, xe = _spin_configs(nv), _spin_configs(ne)
    zv, ze = _spin_configs(nv), _spin_configs(ne)
    # bond products z_v z_v' per edge for each vertex configuration
    bond = np.stack([zv[:, v1] * zv[:, v2] for v1, v2 in edges], axis=1)
    star = np.stack([np.prod(ze[:, [e - nv for e, (a, b) in lm.extras["edges"].items()
                                     if v in (a, b)]], axis=1) for v in range(nv)], axis=1)
    e_ising = xe @ bond.T  # (x_e configs, z_v configs)
    e_gauge = xv @ star.T  # (x_v configs, z_e configs)
    return {"xv": xv, "xe": xe, "zv": zv, "ze": ze, "bond": bond, "star": star,
            "e_ising": e_ising, "e_gauge": e_gauge, "beta_v": bv, "beta_e": be}


def _boltz(energy: np.ndarray, beta: float) -> np.ndarray:
    # common shift cancels in every ratio
    if math.isinf(beta):
        return (energy == energy.max()).astype(float)
    return np.exp(beta * (energy - energy.max()))


def cluster2d_sector_enumeration(lm: LatticeModel, p_v: float, p_e: float,
                                 membrane: Sequence[int] | None = None,
                                 string: Sequence[int] | None = None) -> dict:
    """Sector probabilities, optionally with membrane/string sector averages.

    Sector charges are read off the signs: ``prod_v x_v = (-1)**Q0`` and
    ``prod_{e in dp} x_e = (-1)**Q1_p``.
    """
    T = cluster2d_statmech_tables(lm, p_v, p_e)
    nv = lm.extras["n_vertices"]
    wg = _boltz(T["e_gauge"], T["beta_v"])
    wi = _boltz(T["e_ising"], T["beta_e"])
    Zg, Zi = wg.sum(axis=1), wi.sum(axis=1)
    q0 = (T["xv"].prod(axis=1) < 0).astype(int)
    pl = [[e - nv for e in plq] for plq in lm.extras["plaquettes"]]
    q1 = np.stack([(T["xe"][:, p].prod(axis=1) < 0).astype(int) for p in pl], axis=1)
    num_m = num_s = None
    if membrane is not None:
        bdry = [e - nv for e, (a, b) in lm.extras["edges"].items()
                if (a in membrane) != (b in membrane)]
        wl = T["ze"][:, bdry].prod(axis=1) if bdry else np.ones(len(T["ze"]))
        num_m = T["xv"][:, list(membrane)].prod(axis=1) * (wg @ wl)
    if string is not None:
        ends = {}
        for e in string:
            for v in lm.extras["edges"][e]:
                ends[v] = ends.get(v, 0) ^ 1
        odd = [v for v, c in ends.items() if c]
        zz = T["zv"][:, odd].prod(axis=1) if odd else np.ones(len(T["zv"]))
        num_s = T["xe"][:, [e - nv for e in string]].prod(axis=1) * (wi @ zz)
    total = Zg.sum() * Zi.sum()
    out = {}
    for c0 in (0, 1):
        g_sel = q0 == c0
        for c1 in itertools.product((0, 1), repeat=len(pl)):
            i_sel = np.all(q1 == np.array(c1), axis=1)
            zg, zi = Zg[g_sel].sum(), Zi[i_sel].sum()
            entry = {"probability": zg * zi / total}
            if membrane is not None:
                entry["membrane"] = num_m[g_sel].sum() / zg if zg > 0 else math.nan
            if string is not None:
                entry["string"] = num_s[i_sel].sum() / zi if zi > 0 else math.nan
            out[(c0,) + c1] = entry
    return out
