"""Quenched-disorder Monte Carlo on the Nishimori line.

Two models are simulated with single-spin (single-link) heat-bath updates:

* the 2d random-bond Ising model, ``E = -sum_<ij> J_ij z_i z_j`` with
  ``J_ij = -1`` at rate ``p``; the averaged squared correlator
  ``[<z_i z_j>^2]`` is measured from two independent replicas;
* the 3d random-plaquette Z2 gauge model, ``E = -sum_f x_f prod_{l in f} U_l``
  with ``x_f = -1`` at rate ``p``; ``[<W>^2]`` is measured likewise.

On the Nishimori line ``tanh(beta) = 1 - 2p``.  Every disorder sample gets
its own seed derived from ``(master seed, stream, sample index)`` so results
do not depend on scheduling.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from numba import njit

log = logging.getLogger(__name__)

WORKERS_ENV = "SEPLAB_WORKERS"


# ---- value types -------------------------------------------------------------------


@dataclass(frozen=True)
class NishimoriPoint:
    p: float

    def __post_init__(self):
        if not 0 <= self.p <= 0.5:
            raise ValueError("p must lie in [0, 0.5]")

    @property
    def beta(self) -> float:
        t = 1.0 - 2.0 * self.p
        return math.inf if t >= 1.0 else math.atanh(t)


@dataclass(frozen=True)
class DisorderRealization:
    lattice: str
    L: int
    signs: np.ndarray
    p: float
    seed: tuple

    @property
    def flip_fraction(self) -> float:
        return float(np.mean(self.signs < 0))


@dataclass(frozen=True)
class MCParams:
    n_samples: int = 200
    n_therm: int = 1000
    n_meas: int = 2000
    meas_every: int = 1
    seed: int = 2024

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("need at least two disorder samples for error bars")
        if self.n_meas < 1 or self.n_therm < 0 or self.meas_every < 1:
            raise ValueError("bad sweep counts")


@dataclass
class Estimate:
    mean: float
    stderr: float
    n_disorder: int
    n_sweeps: int
    seed: int
    tau_int: float = math.nan
    flagged: bool = False
    note: str = ""

    def __str__(self) -> str:
        flag = " FLAGGED" if self.flagged else ""
        return f"{self.mean:.6g} +- {self.stderr:.2g} (n={self.n_disorder}){flag}"


def sample_seed(master: int, stream: int, index: int) -> int:
    """Counter-based per-sample seed."""
    ss = np.random.SeedSequence([int(master), int(stream), int(index)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _p_stream(p: float, L: int, tag: int) -> int:
    # stable integer label for a (model, p, L) stream
    return tag * 10_000_000 + int(round(p * 1e6)) * 100 + L


def sample_disorder(lattice: str, L: int, p: float, master: int, index: int) -> DisorderRealization:
    n_bonds = {"square": 2 * L * L, "cubic": 3 * L ** 3}[lattice]
    tag = 1 if lattice == "square" else 2
    rng = np.random.default_rng([int(master), _p_stream(p, L, tag), int(index), 7])
    signs = np.where(rng.random(n_bonds) < p, -1, 1).astype(np.int8)
    return DisorderRealization(lattice, L, signs, p, (master, index))


# ---- numerics helpers --------------------------------------------------------------


def jackknife(fn, *columns: np.ndarray) -> tuple[float, float]:
    """Delete-one jackknife of ``fn(*means)`` over the leading (sample) axis."""
    cols = [np.asarray(c, dtype=float) for c in columns]
    n = cols[0].shape[0]
    tot = [c.sum(axis=0) for c in cols]
    full = fn(*[t / n for t in tot])
    reps = np.array([fn(*[(t - c[i]) / (n - 1) for t, c in zip(tot, cols)]) for i in range(n)])
    err = np.sqrt((n - 1) / n * np.sum((reps - reps.mean(axis=0)) ** 2, axis=0))
    return full, err


def integrated_autocorr_time(series: np.ndarray, c: float = 6.0) -> float:
    """Sokal windowed estimate; returns 0.5 for an uncorrelated or flat series."""
    x = np.asarray(series, dtype=float)
    x = x - x.mean()
    n = x.size
    var = x.var()
    if n < 4 or var <= 1e-15 * max(1.0, float(np.max(np.abs(x)))) ** 2:
        return 0.5
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (var * n)
    tau = 0.5
    for w in range(1, n):
        tau += acf[w]
        if w >= c * tau:
            break
    return float(max(tau, 0.5))


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _map(fn, tasks: list) -> list:
    nw = _workers()
    if nw == 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=nw) as ex:
        return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * nw))))


# ---- 1d exact ----------------------------------------------------------------------


def ising1d_correlation_exact(beta: float, d: int) -> tuple[float, str]:
    """``<z_0 z_d>`` of the infinite 1d Ising chain from its 2x2 transfer matrix."""
    if d < 0:
        raise ValueError("d must be non-negative")
    if d == 0:
        return 1.0, "1"
    if math.isinf(beta):
        return 1.0, "tanh(beta)**d"
    T = np.array([[math.exp(beta), math.exp(-beta)], [math.exp(-beta), math.exp(beta)]])
    w, v = np.linalg.eigh(T)
    sz = np.diag([1.0, -1.0])
    top = np.argmax(w)
    val = 0.0
    for k in range(2):
        m = v[:, top] @ sz @ v[:, k]
        val += m * m * (w[k] / w[top]) ** d
    return float(val), "tanh(beta)**d"


# ---- 2d kernel ---------------------------------------------------------------------


def _acceptance(beta: float) -> np.ndarray:
    """Heat-bath flip probability ``1 / (1 + exp(beta dE))`` for ``dE = -8..8``.

    Metropolis would flip zero-field spins deterministically, which freezes
    replica overlaps on tiny tori with cancelling double bonds.
    """
    dE = np.arange(-8, 9, dtype=float)
    if math.isinf(beta):
        return np.where(dE < 0, 1.0, np.where(dE == 0, 0.5, 0.0))
    return 0.5 * (1.0 - np.tanh(0.5 * beta * dE))


@njit(cache=True)
def _sweep2d(s, L, Jx, Jy, acc):
    for y in range(L):
        for x in range(L):
            i = x + L * y
            r = (x + 1) % L + L * y
            le = (x - 1) % L + L * y
            u = x + L * ((y + 1) % L)
            d = x + L * ((y - 1) % L)
            h = Jx[i] * s[r] + Jx[le] * s[le] + Jy[i] * s[u] + Jy[d] * s[d]
            dE = 2 * s[i] * h
            if np.random.random() < acc[dE + 8]:
                s[i] = -s[i]


@njit(cache=True)
def _energy2d(s, L, Jx, Jy):
    e = 0.0
    for y in range(L):
        for x in range(L):
            i = x + L * y
            e -= Jx[i] * s[i] * s[(x + 1) % L + L * y] + Jy[i] * s[i] * s[x + L * ((y + 1) % L)]
    return e / (2 * L * L)


@njit(cache=True)
def _ising2d_run(L, Jx, Jy, acc, seed, n_therm, n_meas, every, rmax, s1, s2):
    np.random.seed(seed)
    N = L * L
    for _ in range(n_therm):
        _sweep2d(s1, L, Jx, Jy, acc)
        _sweep2d(s2, L, Jx, Jy, acc)
    corr = np.zeros(rmax + 1)
    eser = np.empty(n_meas)
    q = np.empty(N, dtype=np.int64)
    for t in range(n_meas):
        for _ in range(every):
            _sweep2d(s1, L, Jx, Jy, acc)
            _sweep2d(s2, L, Jx, Jy, acc)
        e1 = _energy2d(s1, L, Jx, Jy)
        e2 = _energy2d(s2, L, Jx, Jy)
        eser[t] = 0.5 * (e1 + e2)
        for i in range(N):
            q[i] = s1[i] * s2[i]
        for r in range(rmax + 1):
            acc_r = 0
            for y in range(L):
                for x in range(L):
                    i = x + L * y
                    acc_r += q[i] * (q[(x + r) % L + L * y] + q[x + L * ((y + r) % L)])
            corr[r] += acc_r / (2.0 * N)
    return corr / n_meas, eser


@dataclass
class RBIMRun:
    """Per-sample measurements at one (p, L)."""

    p: float
    L: int
    beta: float
    corr: np.ndarray        # (n_samples, rmax + 1) thermal [<z z>^2] per sample
    energy: np.ndarray      # (n_samples,) mean bond energy per sample
    tau: np.ndarray         # (n_samples,) integrated autocorrelation of the energy
    mc: MCParams

    @property
    def flag_fraction(self) -> float:
        bad = (self.mc.n_therm < 20 * self.tau) | (self.mc.n_meas < 100 * self.tau)
        return float(np.mean(bad))

    @property
    def flagged(self) -> bool:
        return self.flag_fraction > 0.05


def _rbim_task(args):
    p, L, beta, mc, index, rmax, uniform = args
    if uniform:
        Jx = np.ones(L * L, dtype=np.int64)
        Jy = np.ones(L * L, dtype=np.int64)
        seed = sample_seed(mc.seed, _p_stream(beta, L, 3), index)
    else:
        dr = sample_disorder("square", L, p, mc.seed, index)
        J = dr.signs.astype(np.int64)
        Jx, Jy = J[: L * L].copy(), J[L * L:].copy()
        seed = sample_seed(mc.seed, _p_stream(p, L, 1), index)
    s1, s2 = initial_spins(L, seed, hot=uniform)
    corr, eser = ising2d_sample(L, Jx, Jy, beta, seed, mc, rmax, s1, s2)
    return corr, float(eser.mean()), integrated_autocorr_time(eser)


def initial_spins(L: int, seed: int, hot: bool) -> tuple[np.ndarray, np.ndarray]:
    """Two replica starts; hot starts keep the clean control from sitting in one ordered state."""
    if not hot:
        return np.ones(L * L, dtype=np.int64), np.ones(L * L, dtype=np.int64)
    rng = np.random.default_rng([seed, 11])
    return (rng.choice([-1, 1], L * L).astype(np.int64),
            rng.choice([-1, 1], L * L).astype(np.int64))


def ising2d_sample(L: int, Jx: np.ndarray, Jy: np.ndarray, beta: float, seed: int, mc: MCParams,
                   rmax: int, s1: np.ndarray, s2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One disorder sample: replica-averaged ``C(r)`` for ``r <= rmax`` and the energy series.

    ``Jx[i]`` couples site ``i`` to its right neighbour and ``Jy[i]`` to the one
    above; sites are ``x + L*y``.  The start states are copied, not mutated.
    """
    return _ising2d_run(L, np.asarray(Jx, dtype=np.int64), np.asarray(Jy, dtype=np.int64),
                        _acceptance(beta), int(seed), mc.n_therm, mc.n_meas, mc.meas_every, rmax,
                        np.array(s1, dtype=np.int64), np.array(s2, dtype=np.int64))


def rbim_run(p: float, L: int, mc: MCParams, rmax: int | None = None,
             beta: float | None = None, uniform: bool = False) -> RBIMRun:
    """Simulate ``mc.n_samples`` disorder samples at flip rate ``p``.

    ``beta`` defaults to the Nishimori value; ``uniform=True`` with an
    explicit ``beta`` gives the clean ferromagnet control (the samples are
    then independent Markov chains).
    """
    if L < 2:
        raise ValueError("L must be at least 2")
    if beta is None:
        beta = NishimoriPoint(p).beta
    rmax = L // 2 if rmax is None else rmax
    tasks = [(p, L, beta, mc, i, rmax, uniform) for i in range(mc.n_samples)]
    out = _map(_rbim_task, tasks)
    corr = np.array([o[0] for o in out])
    energy = np.array([o[1] for o in out])
    tau = np.array([o[2] for o in out])
    return RBIMRun(p, L, beta, corr, energy, tau, mc)


def _estimate(values: np.ndarray, run, note: str = "") -> Estimate:
    n = values.size
    return Estimate(float(values.mean()), float(values.std(ddof=1) / math.sqrt(n)), n,
                    run.mc.n_therm + run.mc.n_meas * run.mc.meas_every, run.mc.seed,
                    float(np.median(run.tau)), run.flagged, note)


def rbim_average_string(p: float, L: int, r: int, mc: MCParams) -> Estimate:
    """``[<S_C>^2] = E_x[<z_0 z_r>^2]`` at the Nishimori coupling."""
    if L % 2:
        raise ValueError("L must be even")
    if not 0 <= r <= L // 2:
        raise ValueError("need 0 <= r <= L/2")
    run = rbim_run(p, L, mc, rmax=r)
    return _estimate(run.corr[:, r], run)


def nishimori_energy_check(run: RBIMRun, n_sigma: float = 3.0) -> dict:
    """Mean bond energy against ``-tanh(beta)``."""
    mean = float(run.energy.mean())
    err = float(run.energy.std(ddof=1) / math.sqrt(run.energy.size))
    target = -math.tanh(run.beta) if not math.isinf(run.beta) else -1.0
    z = abs(mean - target) / err if err > 0 else (0.0 if mean == target else math.inf)
    return {"mean": mean, "stderr": err, "target": target, "z": z, "ok": z <= n_sigma}


def correlation_length_fit(corr: np.ndarray, L: int, r_min: int = 1) -> float:
    """Fit ``C(r) = A cosh((r - L/2) / xi)`` on the torus; returns ``xi``."""
    r = np.arange(r_min, L // 2 + 1)
    c = np.asarray(corr, dtype=float)[r]
    keep = c > 0
    r, c = r[keep], np.log(c[keep])
    if r.size < 2:
        return math.nan

    def resid(xi):
        f = np.log(np.cosh((r - L / 2) / xi))
        return np.sum((c - f - np.mean(c - f)) ** 2)

    xis = np.geomspace(0.05, 50.0 * L, 4000)
    return float(xis[np.argmin([resid(x) for x in xis])])


# ---- crossing analysis -------------------------------------------------------------


@dataclass
class CrossingResult:
    found: bool
    estimate: float
    ci: tuple
    pairwise: dict
    grid: np.ndarray
    sizes: tuple
    ratio: dict = field(default_factory=dict)
    ratio_err: dict = field(default_factory=dict)
    note: str = ""

    def __str__(self) -> str:
        if not self.found:
            return f"no crossing in grid ({self.note})"
        return f"crossing {self.estimate:.5g} CI [{self.ci[0]:.5g}, {self.ci[1]:.5g}]"


def _ratio(c_half: np.ndarray, c_quarter: np.ndarray) -> float:
    d = np.mean(c_quarter)
    return float(np.mean(c_half) / d) if d != 0 else math.nan


def _crossing(grid: np.ndarray, r1: np.ndarray, r2: np.ndarray) -> float | None:
    """Root of ``r1 - r2`` by linear interpolation; the sign change nearest the centre."""
    d = r1 - r2
    roots = []
    for k in range(len(grid) - 1):
        if d[k] == 0:
            roots.append(grid[k])
        elif d[k] * d[k + 1] < 0:
            roots.append(grid[k] - d[k] * (grid[k + 1] - grid[k]) / (d[k + 1] - d[k]))
    if d[-1] == 0:
        roots.append(grid[-1])
    if not roots:
        return None
    mid = 0.5 * (grid[0] + grid[-1])
    return float(min(roots, key=lambda x: abs(x - mid)))


def crossing_from_runs(grid: Sequence[float], runs: dict, n_boot: int = 200,
                       seed: int = 0) -> CrossingResult:
    """Crossing of ``R = C(L/2) / C(L/4)`` between consecutive sizes.

    ``runs[(g, L)]`` holds per-sample correlators; bootstrap resamples the
    disorder samples independently at every (g, L).
    """
    grid = np.asarray(grid, dtype=float)
    sizes = tuple(sorted({L for _, L in runs}))
    if len(sizes) < 2:
        raise ValueError("a crossing needs at least two sizes")

    def ratios(sel=None):
        out = {}
        for L in sizes:
            vals = []
            for g in grid:
                c = runs[(g, L)]
                idx = slice(None) if sel is None else sel[(g, L)]
                vals.append(_ratio(c[idx, L // 2], c[idx, L // 4]))
            out[L] = np.array(vals)
        return out

    def estimate(rt):
        pw = {}
        for L1, L2 in zip(sizes[:-1], sizes[1:]):
            pw[(L1, L2)] = _crossing(grid, rt[L1], rt[L2])
        good = [v for v in pw.values() if v is not None]
        return pw, (float(np.mean(good)) if len(good) == len(pw) else None)

    rt = ratios()
    rerr = {}
    for L in sizes:
        rerr[L] = np.array([jackknife(lambda a, b: a / b, runs[(g, L)][:, L // 2],
                                      runs[(g, L)][:, L // 4])[1] for g in grid])
    pw, est = estimate(rt)
    if est is None:
        return CrossingResult(False, math.nan, (math.nan, math.nan), pw, grid, sizes, rt, rerr,
                              "at least one size pair does not cross inside the grid")
    rng = np.random.default_rng(seed)
    boots = []
    for _ in range(n_boot):
        sel = {k: rng.integers(0, v.shape[0], v.shape[0]) for k, v in runs.items()}
        _, b = estimate(ratios(sel))
        if b is not None:
            boots.append(b)
    if boots:
        ci = (float(np.percentile(boots, 2.5)), float(np.percentile(boots, 97.5)))
    else:
        ci = (math.nan, math.nan)
    note = f"{len(boots)}/{n_boot} bootstrap replicas crossed"
    return CrossingResult(True, est, ci, pw, grid, sizes, rt, rerr, note)


@dataclass
class RBIMScan:
    crossing: CrossingResult
    runs: dict
    nishimori: dict


def rbim_critical_scan(p_grid: Sequence[float], L_list: Sequence[int], mc: MCParams,
                       n_boot: int = 200) -> RBIMScan:
    if len(L_list) < 2:
        raise ValueError("crossing undefined for a single size")
    if any(L % 4 for L in L_list):
        raise ValueError("sizes must be multiples of 4 so that L/4 is a lattice distance")
    full, corr, nish = {}, {}, {}
    for L in L_list:
        for p in p_grid:
            run = rbim_run(float(p), L, mc)
            full[(float(p), L)] = run
            corr[(float(p), L)] = run.corr
            nish[(float(p), L)] = nishimori_energy_check(run)
            log.info("rbim p=%.4f L=%d R=%.4f", p, L,
                     _ratio(run.corr[:, L // 2], run.corr[:, L // 4]))
    cr = crossing_from_runs([float(p) for p in p_grid], corr, n_boot, seed=mc.seed)
    return RBIMScan(cr, full, nish)


def ising_critical_scan(beta_grid: Sequence[float], L_list: Sequence[int], mc: MCParams,
                        n_boot: int = 200) -> CrossingResult:
    """Clean-ferromagnet control: ``R`` crossing as a function of ``beta``."""
    if len(L_list) < 2:
        raise ValueError("crossing undefined for a single size")
    corr = {}
    for L in L_list:
        for b in beta_grid:
            run = rbim_run(0.0, L, mc, beta=float(b), uniform=True)
            corr[(float(b), L)] = run.corr
    return crossing_from_runs([float(b) for b in beta_grid], corr, n_boot, seed=mc.seed)


# ---- exact enumeration -------------------------------------------------------------


def _square_bonds(L: int) -> list:
    bonds = []
    for y in range(L):
        for x in range(L):
            bonds.append((x + L * y, (x + 1) % L + L * y))
    for y in range(L):
        for x in range(L):
            bonds.append((x + L * y, x + L * ((y + 1) % L)))
    return bonds


def enumerate_oracle_2d(p: float, L: int, r: int, chunk: int = 4096) -> float:
    """Exact ``E_x[ mean_{i, dir} <z_i z_{i+r}>^2 ]`` by full enumeration (L <= 3)."""
    if L > 3:
        raise ValueError("enumeration limited to L <= 3")
    N = L * L
    bonds = _square_bonds(L)
    nb = len(bonds)
    beta = NishimoriPoint(p).beta
    spins = 1 - 2 * ((np.arange(1 << N)[:, None] >> np.arange(N)[None, :]) & 1)
    bond_prod = np.stack([spins[:, a] * spins[:, b] for a, b in bonds], axis=1).astype(float)
    pairs = []
    for y in range(L):
        for x in range(L):
            i = x + L * y
            pairs.append((i, (x + r) % L + L * y))
            pairs.append((i, x + L * ((y + r) % L)))
    pair_prod = np.stack([spins[:, a] * spins[:, b] for a, b in pairs], axis=1).astype(float)
    total = 0.0
    for start in range(0, 1 << nb, chunk):
        idx = np.arange(start, min(start + chunk, 1 << nb))
        x = 1 - 2 * ((idx[:, None] >> np.arange(nb)[None, :]) & 1)
        n_neg = (x < 0).sum(axis=1)
        prob = (p ** n_neg) * ((1 - p) ** (nb - n_neg))
        energy = x @ bond_prod.T  # (configs, spin states), this is -E
        if math.isinf(beta):
            w = (energy == energy.max(axis=1, keepdims=True)).astype(float)
        else:
            w = np.exp(beta * (energy - energy.max(axis=1, keepdims=True)))
        Z = w.sum(axis=1)
        corr = (w @ pair_prod) / Z[:, None]
        total += float(np.sum(prob * np.mean(corr ** 2, axis=1)))
    return total


# ---- 3d gauge kernel ---------------------------------------------------------------
# links are 3*site + d; plaquettes are 3*site + normal, spanned at the corner site


def _site3(x, y, z, L):
    return (x % L) + L * ((y % L) + L * (z % L))


def cubic_tables(L: int) -> tuple[np.ndarray, np.ndarray]:
    """``(plaq_links, link_plaqs)``: the 4 links of every plaquette, the 4 plaquettes of every link."""
    n = L ** 3
    plaq_links = np.empty((3 * n, 4), dtype=np.int64)
    for z in range(L):
        for y in range(L):
            for x in range(L):
                c = (x, y, z)
                s0 = _site3(x, y, z, L)
                for a in range(3):
                    for b in range(a + 1, 3):
                        ca = list(c)
                        ca[a] += 1
                        cb = list(c)
                        cb[b] += 1
                        plaq_links[3 * s0 + (3 - a - b)] = [3 * s0 + a, 3 * _site3(*ca, L) + b,
                                                          3 * _site3(*cb, L) + a, 3 * s0 + b]
    link_plaqs = [[] for _ in range(3 * n)]
    for f, links in enumerate(plaq_links):
        for li in links:
            link_plaqs[li].append(f)
    return plaq_links, np.array(link_plaqs, dtype=np.int64)


def loop_links(L: int, Ra: int, Rb: int) -> np.ndarray:
    """Links of every ``Ra x Rb`` rectangle, all corners and all six oriented planes."""
    out = []
    for z in range(L):
        for y in range(L):
            for x in range(L):
                for a in range(3):
                    for b in range(3):
                        if a == b:
                            continue
                        p = [x, y, z]
                        links = []
                        for d, n_steps, step in ((a, Ra, 1), (b, Rb, 1), (a, Ra, -1), (b, Rb, -1)):
                            for _ in range(n_steps):
                                if step < 0:
                                    p[d] -= 1
                                links.append(3 * _site3(*p, L) + d)
                                if step > 0:
                                    p[d] += 1
                        out.append(links)
    return np.array(out, dtype=np.int64)


@njit(cache=True)
def _sweep3d(U, xf, plaq_links, link_plaqs, acc):
    for li in range(U.size):
        h = 0
        for k in range(4):
            f = link_plaqs[li, k]
            pl = plaq_links[f]
            h += xf[f] * U[pl[0]] * U[pl[1]] * U[pl[2]] * U[pl[3]]
        if np.random.random() < acc[2 * h + 8]:
            U[li] = -U[li]


@njit(cache=True)
def _energy3d(U, xf, plaq_links):
    e = 0.0
    for f in range(xf.size):
        pl = plaq_links[f]
        e -= xf[f] * U[pl[0]] * U[pl[1]] * U[pl[2]] * U[pl[3]]
    return e / xf.size


@njit(cache=True)
def _gauge_run(xf, plaq_links, link_plaqs, acc, seed, n_therm, n_meas, every, loops, loop_shape):
    np.random.seed(seed)
    nl = link_plaqs.shape[0]
    U1 = np.ones(nl, dtype=np.int64)
    U2 = np.ones(nl, dtype=np.int64)
    for _ in range(n_therm):
        _sweep3d(U1, xf, plaq_links, link_plaqs, acc)
        _sweep3d(U2, xf, plaq_links, link_plaqs, acc)
    ns = loop_shape.max() + 1
    wsum = np.zeros(ns)
    cnt = np.zeros(ns)
    for k in range(loops.shape[0]):
        cnt[loop_shape[k]] += 1
    eser = np.empty(n_meas)
    for t in range(n_meas):
        for _ in range(every):
            _sweep3d(U1, xf, plaq_links, link_plaqs, acc)
            _sweep3d(U2, xf, plaq_links, link_plaqs, acc)
        eser[t] = 0.5 * (_energy3d(U1, xf, plaq_links) + _energy3d(U2, xf, plaq_links))
        for k in range(loops.shape[0]):
            w1 = 1
            w2 = 1
            for j in range(loops.shape[1]):
                li = loops[k, j]
                if li < 0:
                    break
                w1 *= U1[li]
                w2 *= U2[li]
            wsum[loop_shape[k]] += w1 * w2
    return wsum / (cnt * n_meas), eser


def _loop_table(L: int, shapes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    blocks = [loop_links(L, int(a), int(b)) for a, b in shapes]
    width = max(bl.shape[1] for bl in blocks)
    table = np.concatenate([np.pad(bl, ((0, 0), (0, width - bl.shape[1])), constant_values=-1)
                            for bl in blocks])
    label = np.concatenate([np.full(bl.shape[0], k, dtype=np.int64) for k, bl in enumerate(blocks)])
    return table, label


@dataclass
class RPGMRun:
    p: float
    L: int
    beta: float
    shapes: np.ndarray      # (n_shapes, 2)
    wilson: np.ndarray      # (n_samples, n_shapes) thermal <W>^2 per sample
    energy: np.ndarray      # mean plaquette energy per sample
    tau: np.ndarray
    mc: MCParams

    @property
    def flagged(self) -> bool:
        bad = (self.mc.n_therm < 20 * self.tau) | (self.mc.n_meas < 100 * self.tau)
        return float(np.mean(bad)) > 0.05


def _rpgm_task(args):
    p, L, beta, mc, index, shapes = args
    dr = sample_disorder("cubic", L, p, mc.seed, index)
    seed = sample_seed(mc.seed, _p_stream(p, L, 2), index)
    plaq_links, link_plaqs = _cubic_cached(L)
    loops, label = _loops_cached(L, tuple(map(tuple, shapes)))
    w, eser = _gauge_run(dr.signs.astype(np.int64), plaq_links, link_plaqs, _acceptance(beta),
                         seed, mc.n_therm, mc.n_meas, mc.meas_every, loops, label)
    return w, float(eser.mean()), integrated_autocorr_time(eser)


@lru_cache(maxsize=8)
def _cubic_cached(L):
    return cubic_tables(L)


@lru_cache(maxsize=8)
def _loops_cached(L, shapes):
    return _loop_table(L, np.array(shapes, dtype=np.int64).reshape(-1, 2))


DEFAULT_LOOPS = ((1, 1), (1, 2), (2, 2), (1, 3), (2, 3), (3, 3), (2, 4), (3, 4), (4, 4))


def rpgm_run(p: float, L: int, mc: MCParams, shapes: Sequence[tuple] = DEFAULT_LOOPS) -> RPGMRun:
    if any(max(s) > L // 2 for s in shapes):
        raise ValueError("loop sides must not exceed L/2")
    sh = np.array(shapes, dtype=np.int64).reshape(-1, 2)
    beta = NishimoriPoint(p).beta
    out = _map(_rpgm_task, [(p, L, beta, mc, i, sh) for i in range(mc.n_samples)])
    return RPGMRun(p, L, beta, sh, np.array([o[0] for o in out]), np.array([o[1] for o in out]),
                   np.array([o[2] for o in out]), mc)


def rpgm_average_membrane(p: float, L: int, R: int, mc: MCParams) -> Estimate:
    """``[<M_S>^2] = E_x[<W_{dS}>^2]`` for an ``R x R`` loop."""
    if not 1 <= R <= L // 2:
        raise ValueError("need 1 <= R <= L/2")
    run = rpgm_run(p, L, mc, [(R, R)])
    return _estimate(run.wilson[:, 0], run)


@dataclass
class LawFit:
    preferred: str
    aic_area: float
    aic_perimeter: float
    area_coeff: float
    area_coeff_err: float
    perimeter_coeff: float
    chi2_area: float
    chi2_perimeter: float

    @property
    def margin(self) -> float:
        return abs(self.aic_area - self.aic_perimeter)


def _wls(A: np.ndarray, y: np.ndarray, sig: np.ndarray):
    w = 1.0 / sig
    coef, *_ = np.linalg.lstsq(A * w[:, None], y * w, rcond=None)
    chi2 = float(np.sum(((A @ coef - y) * w) ** 2))
    cov = np.linalg.inv((A * w[:, None]).T @ (A * w[:, None]))
    return coef, chi2, cov


def area_perimeter_fit(run: RPGMRun, min_side: int = 1) -> LawFit:
    """Compare ``-ln[W^2] = a Area + b Perimeter + c`` against ``a = 0`` by AIC."""
    keep = np.min(run.shapes, axis=1) >= min_side
    shapes = run.shapes[keep]
    W = run.wilson[:, keep]
    mean = W.mean(axis=0)
    err = W.std(axis=0, ddof=1) / math.sqrt(W.shape[0])
    if np.any(mean <= 0):
        raise ValueError("non-positive loop average; increase statistics or shrink loops")
    y = -np.log(mean)
    sig = np.maximum(err / mean, 1e-12)
    area = shapes[:, 0] * shapes[:, 1]
    perim = 2 * (shapes[:, 0] + shapes[:, 1])
    ones = np.ones_like(area)
    ca, chi_a, cov_a = _wls(np.stack([area, perim, ones], 1).astype(float), y, sig)
    cp, chi_p, _ = _wls(np.stack([perim, ones], 1).astype(float), y, sig)
    aic_a, aic_p = chi_a + 2 * 3, chi_p + 2 * 2
    return LawFit("area" if aic_a < aic_p else "perimeter", aic_a, aic_p, float(ca[0]),
                  float(math.sqrt(cov_a[0, 0])), float(cp[0]), chi_a, chi_p)


@dataclass
class RPGMScan:
    fits: dict
    runs: dict
    bracket: tuple
    nishimori: dict


def rpgm_scan(p_grid: Sequence[float], L: int, mc: MCParams,
              shapes: Sequence[tuple] = DEFAULT_LOOPS) -> RPGMScan:
    """Preferred law per p; the bracket is (last perimeter p, first area p)."""
    fits, runs, nish = {}, {}, {}
    for p in sorted(float(q) for q in p_grid):
        run = rpgm_run(p, L, mc, shapes)
        runs[p] = run
        fits[p] = area_perimeter_fit(run)
        mean = float(run.energy.mean())
        err = float(run.energy.std(ddof=1) / math.sqrt(run.energy.size))
        target = -math.tanh(run.beta) if not math.isinf(run.beta) else -1.0
        nish[p] = {"mean": mean, "stderr": err, "target": target,
                   "z": abs(mean - target) / err if err > 0 else 0.0}
        log.info("rpgm p=%.4f L=%d -> %s", p, L, fits[p].preferred)
    ps = sorted(fits)
    lo, hi = math.nan, math.nan
    for a, b in zip(ps[:-1], ps[1:]):
        if fits[a].preferred == "perimeter" and fits[b].preferred == "area":
            lo, hi = a, b
            break
    return RPGMScan(fits, runs, (lo, hi), nish)
