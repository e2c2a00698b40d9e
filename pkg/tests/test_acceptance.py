"""End-to-end acceptance runs at the stated sizes and tolerances.

Each test records a PASS/FAIL line through the ``report`` fixture; the lines
are repeated under "acceptance criteria" in the pytest terminal summary.
The Monte Carlo criteria take several minutes each on one core.
"""

import itertools
import math
import time

import numpy as np
import scipy.linalg as sla

from seplab import doublestate as ds
from seplab import fermion as fm
from seplab import gaussian as ga
from seplab import gibbs, models
from seplab import statmech as sm


def test_c01_channel_equals_gibbs(report):
    t0 = time.perf_counter()
    lm = models.cluster_1d(4)
    p = 0.3
    rates = lm.rates(a=p, b=p)
    rho = gibbs.dense_channel_oracle(lm.model, rates)
    beta = math.atanh(1 - 2 * p)
    H = sum(gibbs.dense(t) for t in lm.model.terms)
    G = sla.expm(-beta * H)
    G /= np.trace(G)
    dev = float(np.max(np.abs(rho - G)))
    dev_desc = float(np.max(np.abs(rho - gibbs.decohere_ground_state(lm.model, rates)
                                   .exponential_dense())))
    wall = time.perf_counter() - t0
    ok = lm.n_qubits == 8 and max(dev, dev_desc) < 1e-10 and wall < 5
    report(1, ok, f"maxdev {max(dev, dev_desc):.1e} in {wall:.2f} s")
    assert ok


def _bit_samples(n, count=24):
    if 2 ** n <= count:
        return list(itertools.product((0, 1), repeat=n))
    rng = np.random.default_rng(n)
    return [tuple(int(b) for b in rng.integers(0, 2, n)) for _ in range(count)]


def test_c02_one_dimensional_closed_forms(report):
    t0 = time.perf_counter()
    worst_string = worst_disorder = 0.0
    for N, p in itertools.product((3, 4), (0.1, 0.25, 0.4)):
        lm = models.cluster_1d(N)
        rates = lm.rates(a=0.2, b=p)
        rho = models.decohered_state(lm, rates)
        for q, pq in models.sector_probabilities_dense(lm, rates, rho).items():
            if pq < 1e-12:
                continue
            for ell in range(1, N):
                obs = models.string_operator_1d(lm, "b", 0, ell - 1)
                dense = models.sector_observable_dense(lm, rates, q, obs, rho)
                exact = models.string_order_1d_exact(p, ell, N, q[1])
                worst_string = max(worst_string, abs(dense - exact))
        rates = lm.rates(a=0.15, b=p)
        for bits in _bit_samples(2 * N):
            psi = models.cda_state_dense(lm, rates, bits)
            u = (-1) ** sum(bits[1::2])
            for ell in range(2, N):
                obs = models.disorder_operator_1d(lm, "a", 0, ell - 1)
                exact = (-1) ** sum(bits[0:2 * ell:2]) * models.disorder_op_1d_exact(p, N, u)
                worst_disorder = max(worst_disorder, abs(models.expectation(psi, obs) - exact))
    wall = time.perf_counter() - t0
    ok = max(worst_string, worst_disorder) < 1e-10 and wall < 30
    report(2, ok, f"string {worst_string:.1e}, disorder {worst_disorder:.1e} in {wall:.1f} s")
    assert ok


def test_c03_two_dimensional_sectors(report):
    t0 = time.perf_counter()
    lm = models.cluster_2d(2, 2)
    rng = np.random.default_rng(17)
    worst = 0.0
    for pv, pe in rng.uniform(0.02, 0.48, (5, 2)):
        dense = models.sector_probabilities_dense(lm, lm.rates(v=pv, e=pe))
        enum = models.cluster2d_sector_enumeration(lm, pv, pe)
        assert set(dense) == set(enum)
        worst = max(worst, max(abs(v - enum[q]["probability"]) for q, v in dense.items()))
    wall = time.perf_counter() - t0
    ok = worst < 1e-10 and wall < 120
    report(3, ok, f"maxdev {worst:.1e} over 5 points in {wall:.1f} s")
    assert ok


def test_c04_nishimori_threshold(report):
    t0 = time.perf_counter()
    mc = sm.MCParams(n_samples=500, n_therm=1000, n_meas=2000)
    grid = [0.08, 0.09, 0.10, 0.11, 0.12, 0.13, 0.14]
    scan = sm.rbim_critical_scan(grid, [8, 12, 16], mc)
    cr = scan.crossing
    worst_z = max(abs(v["z"]) for v in scan.nishimori.values())
    wall = time.perf_counter() - t0
    in_window = cr.found and 0.09 <= cr.estimate <= 0.13
    ok = in_window and worst_z < 3 and wall < 3600
    report(4, ok, f"{cr}, worst Nishimori energy z {worst_z:.2f}, {wall:.0f} s")
    assert ok


def test_c05_gauge_model_law_change(report):
    t0 = time.perf_counter()
    mc = sm.MCParams(n_samples=100, n_therm=500, n_meas=1000, seed=2024)
    grid = [0.015, 0.03, 0.045, 0.06, 0.08]
    shapes = [s for s in sm.DEFAULT_LOOPS if max(s) <= 4]
    scan = sm.rpgm_scan(grid, 8, mc, shapes)
    lo, hi = scan.bracket
    flips = scan.fits[0.015].preferred == "perimeter" and scan.fits[0.08].preferred == "area"
    brackets = not math.isnan(lo) and lo >= 0.015 and hi <= 0.045
    wall = time.perf_counter() - t0
    ok = flips and brackets and wall < 7200
    laws = ", ".join(f"{p}:{f.preferred}" for p, f in sorted(scan.fits.items()))
    report(5, ok, f"bracket ({lo}, {hi}); {laws}; {wall:.0f} s")
    assert ok


def test_c06_covariance_channel(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    n = 4
    worst = 0.0
    for _ in range(20):
        M = ga.random_pure_covariance(n, rng)
        p = float(rng.uniform(0, 0.5))
        rho, _ = ga.dense_channel_oracle_fermionic(fm.gaussian_density(M.matrix), n, p)
        worst = max(worst, float(np.max(np.abs(fm.covariance_of(rho, n)
                                               - (1 - 2 * p) ** 2 * M.matrix))))
    wall = time.perf_counter() - t0
    ok = worst < 1e-10 and wall < 10
    report(6, ok, f"maxdev {worst:.1e} over 20 states in {wall:.2f} s")
    assert ok


def test_c07_cda_states(report):
    rng = np.random.default_rng(7)
    worst = 0.0
    for i in range(20):
        n = 2 + i % 5
        p = float(rng.uniform(0.02, 0.45))
        K = ga.decohered_generator(ga.random_pure_covariance(n, rng), p)
        m = rng.integers(0, 2, n)
        got = ga.cda_state_covariance(K, m).covariance.matrix
        worst = max(worst, float(np.max(np.abs(got - ga.cda_dense_oracle(K, m).matrix))))
    model = ga.BdgModel(6, 6)
    M0 = ga.ground_state_covariance(model)
    vac = np.zeros(model.n_sites, dtype=int)
    route = 0.0
    for p in (0.02, 0.04, 0.1, 0.3):
        got = ga.cda_state_covariance(ga.decohered_generator(M0, p), vac).covariance.matrix
        want = ga.thouless_covariance(ga.pairing_matrix(model, p)).matrix
        route = max(route, float(np.max(np.abs(got - want))))
    ok = worst < 1e-8 and route < 1e-8
    report(7, ok, f"vs dense {worst:.1e}, vs pairing route {route:.1e}")
    assert ok


def test_c08_modular_commutator(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    dense_dev = 0.0
    for n in (3, 4, 5, 6):
        for make in (ga.random_pure_covariance, ga.random_mixed_covariance):
            M = make(n, rng)
            idx = rng.permutation(n)
            A, B, C = list(idx[:1]), list(idx[1:n - 1]), list(idx[n - 1:])
            got = ga.modular_commutator(M, A, B, C).value
            dense_dev = max(dense_dev, abs(got - ga.modular_commutator_dense(M, A, B, C)))
    ratio = ga.cda_modular_commutator(36, 0.0).value / (math.pi / 6)
    decreasing = {}
    for m in ("uniform", "staggered", "random"):
        J = [ga.cda_modular_commutator(L, 0.04, m, seed=1).value for L in (12, 24, 36)]
        decreasing[m] = (J[0] > J[1] > J[2], J)
    wall = time.perf_counter() - t0
    ok = (dense_dev < 1e-6 and 0.9 <= ratio <= 1.1
          and all(v[0] for v in decreasing.values()) and wall < 1800)
    trend = "; ".join(f"{m} " + ",".join(f"{j:.4f}" for j in v[1]) for m, v in decreasing.items())
    report(8, ok, f"dense {dense_dev:.1e}, J/J0 {ratio:.4f}, p=0.04 {trend}; {wall:.0f} s")
    assert ok


def test_c09_entanglement_spectra(report):
    t0 = time.perf_counter()
    crossing = ga.cda_entanglement_spectrum(60, 16, 0.0, bc_y="periodic").min_gap()
    g16 = ga.cda_entanglement_spectrum(60, 16, 0.04, bc_y="antiperiodic").min_gap()
    g30 = ga.cda_entanglement_spectrum(60, 30, 0.04, bc_y="antiperiodic").min_gap()
    dbl = [ds.cylinder_gap(60, 16, p) for p in (0.0, 0.02, 0.05)]
    wall = time.perf_counter() - t0
    ok = (crossing < 0.05 and 0 < g16 <= g30 and dbl[2] > dbl[1] > dbl[0] and wall < 600)
    report(9, ok, f"p=0 crossing {crossing:.1e}; p=0.04 gap {g16:.5f} -> {g30:.5f}; "
                  f"double-state gaps {dbl[0]:.4f} < {dbl[1]:.4f} < {dbl[2]:.4f}; {wall:.0f} s")
    assert ok


def test_c10_transport_and_naive_map(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    transport = max(ds.cj_transport_rules_dense(ds.random_even_density(n, rng), n).max_deviation
                    for n in (1, 2, 3))
    naive = ds.naive_map_counterexample(0.5, rng=rng)
    wall = time.perf_counter() - t0
    ok = (transport < 1e-12 and naive.naive_idempotency_defect > 0.1
          and naive.channel_idempotency_defect < 1e-12 and wall < 10)
    report(10, ok, f"transport {transport:.1e}, naive defect {naive.naive_idempotency_defect:.3f}, "
                   f"channel defect {naive.channel_idempotency_defect:.1e}")
    assert ok


def test_c11_pairing_localization(report):
    t0 = time.perf_counter()
    model = ga.BdgModel(48, 48)
    clean = ga.pairing_decay_fit(model, 0.0)
    noisy = ga.pairing_decay_fit(model, 0.04)
    wall = time.perf_counter() - t0
    ok = (clean.preferred == "power" and noisy.preferred == "exponential"
          and clean.margin > 10 and noisy.margin > 10 and wall < 60)
    report(11, ok, f"p=0 {clean.preferred} (margin {clean.margin:.1f}), p=0.04 "
                   f"{noisy.preferred} (margin {noisy.margin:.1f}, xi {noisy.length:.3g})")
    assert ok


def test_c12_clean_ising_control(report):
    t0 = time.perf_counter()
    mc = sm.MCParams(n_samples=100, n_therm=1000, n_meas=2000, seed=7)
    betas = np.round(np.arange(0.40, 0.4801, 0.01), 4)
    cr = sm.ising_critical_scan(betas, [8, 12, 16], mc)
    exact = math.atanh(math.sqrt(2) - 1)
    rel = (cr.estimate - exact) / exact if cr.found else math.inf
    wall = time.perf_counter() - t0
    ok = abs(rel) < 0.02 and wall < 600
    report(12, ok, f"{cr} vs {exact:.5f} (rel {rel:+.2%}); {wall:.0f} s")
    assert ok
