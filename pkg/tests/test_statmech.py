import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seplab import statmech as sm
from seplab.statmech import MCParams, NishimoriPoint


def test_nishimori_beta():
    assert math.isinf(NishimoriPoint(0.0).beta)
    assert NishimoriPoint(0.5).beta == 0.0
    assert math.tanh(NishimoriPoint(0.109).beta) == pytest.approx(0.782, abs=1e-15)
    with pytest.raises(ValueError):
        NishimoriPoint(0.6)


@settings(max_examples=30)
@given(st.floats(1e-9, 0.5))
def test_nishimori_tanh_identity(p):
    assert math.tanh(NishimoriPoint(p).beta) == pytest.approx(1 - 2 * p, abs=1e-12)


def test_ising1d_examples():
    assert sm.ising1d_correlation_exact(0.0, 3)[0] == pytest.approx(0.0, abs=1e-15)
    assert sm.ising1d_correlation_exact(0.7, 0)[0] == 1.0
    val, sym = sm.ising1d_correlation_exact(0.5493, 4)
    assert val == pytest.approx(0.0625, abs=1e-4)
    assert sym == "tanh(beta)**d"
    with pytest.raises(ValueError):
        sm.ising1d_correlation_exact(0.5, -1)


@settings(max_examples=30)
@given(st.floats(0.0, 3.0), st.integers(0, 12))
def test_ising1d_is_tanh_power(beta, d):
    assert sm.ising1d_correlation_exact(beta, d)[0] == pytest.approx(math.tanh(beta) ** d,
                                                                     abs=1e-12)


def test_disorder_flip_fraction():
    L, p = 16, 0.1
    fr = [sm.sample_disorder("square", L, p, 3, i).flip_fraction for i in range(200)]
    n = 200 * 2 * L * L
    assert abs(np.mean(fr) - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_disorder_deterministic():
    a = sm.sample_disorder("cubic", 4, 0.2, 9, 5)
    b = sm.sample_disorder("cubic", 4, 0.2, 9, 5)
    c = sm.sample_disorder("cubic", 4, 0.2, 9, 6)
    np.testing.assert_array_equal(a.signs, b.signs)
    assert not np.array_equal(a.signs, c.signs)


def test_jackknife_of_mean_is_standard_error():
    x = np.random.default_rng(1).normal(size=50)
    mean, err = sm.jackknife(lambda m: m, x)
    assert mean == pytest.approx(x.mean())
    assert err == pytest.approx(x.std(ddof=1) / math.sqrt(50))


def test_autocorr_white_noise():
    x = np.random.default_rng(2).normal(size=20000)
    assert sm.integrated_autocorr_time(x) == pytest.approx(0.5, abs=0.1)
    assert sm.integrated_autocorr_time(np.ones(100)) == 0.5


def test_autocorr_ar1():
    rng = np.random.default_rng(3)
    a, n = 0.8, 100000
    x = np.empty(n)
    x[0] = 0
    for i in range(1, n):
        x[i] = a * x[i - 1] + rng.normal()
    # exact: (1 + a) / (2 (1 - a)) = 4.5
    assert sm.integrated_autocorr_time(x) == pytest.approx(4.5, rel=0.15)


def test_mc_params_validation():
    with pytest.raises(ValueError):
        MCParams(n_samples=1)
    with pytest.raises(ValueError):
        MCParams(n_meas=0)


def test_enumeration_examples():
    assert sm.enumerate_oracle_2d(0.0, 2, 1) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        sm.enumerate_oracle_2d(0.1, 4, 1)


FAST = MCParams(n_samples=40, n_therm=200, n_meas=800, seed=5)


def test_string_at_zero_rate_is_one():
    est = sm.rbim_average_string(0.0, 8, 4, FAST)
    assert est.mean == 1.0


@pytest.mark.parametrize("p,L,r", [(0.05, 2, 1), (0.1, 2, 1), (0.2, 2, 1), (0.25, 2, 1),
                                   (0.4, 2, 1), (0.5, 2, 1), (0.08, 3, 1), (0.15, 3, 1),
                                   (0.3, 3, 1), (0.45, 3, 1)])
def test_mc_matches_enumeration(p, L, r):
    mc = MCParams(n_samples=400, n_therm=200, n_meas=1000, seed=13)
    run = sm.rbim_run(p, L, mc, rmax=r)
    vals = run.corr[:, r]
    err = vals.std(ddof=1) / math.sqrt(vals.size)
    exact = sm.enumerate_oracle_2d(p, L, r)
    assert abs(vals.mean() - exact) < 3 * err + 2e-3


def test_nishimori_energy_identity():
    run = sm.rbim_run(0.1, 8, FAST)
    assert sm.nishimori_energy_check(run)["ok"]


def test_gauge_transform_leaves_measurements_unchanged():
    L = 6
    mc = MCParams(n_samples=2, n_therm=50, n_meas=100, seed=1)
    dr = sm.sample_disorder("square", L, 0.2, 1, 0)
    J = dr.signs.astype(np.int64)
    Jx, Jy = J[:L * L], J[L * L:]
    s = np.random.default_rng(4).choice([-1, 1], L * L)
    idx = np.arange(L * L)
    right = (idx % L + 1) % L + L * (idx // L)
    up = (idx + L) % (L * L)
    Jx2, Jy2 = Jx * s * s[right], Jy * s * s[up]
    ones = np.ones(L * L, dtype=np.int64)
    beta = NishimoriPoint(0.2).beta
    c1, e1 = sm.ising2d_sample(L, Jx, Jy, beta, 77, mc, 3, ones, ones)
    c2, e2 = sm.ising2d_sample(L, Jx2, Jy2, beta, 77, mc, 3, ones * s, ones * s)
    np.testing.assert_allclose(c1, c2, atol=1e-12)
    np.testing.assert_allclose(e1, e2, atol=1e-12)


def test_ordered_side_plateau():
    est = sm.rbim_average_string(0.05, 16, 8, FAST)
    assert est.mean > 0.3


def test_disordered_side_decays():
    run = sm.rbim_run(0.2, 16, FAST)
    mean = run.corr.mean(axis=0)
    assert sm.correlation_length_fit(mean, 16) < 16 / 4
    # monotone in r up to statistical error
    err = run.corr.std(axis=0, ddof=1) / math.sqrt(run.corr.shape[0])
    assert np.all(np.diff(mean) < 3 * (err[1:] + err[:-1]))


def test_correlation_length_fit_recovers_xi():
    L, xi = 32, 3.0
    r = np.arange(L // 2 + 1)
    corr = 0.7 * np.cosh((r - L / 2) / xi)
    assert sm.correlation_length_fit(corr, L) == pytest.approx(xi, rel=0.01)


def _synthetic_runs(grid, sizes, pc, noise, seed=0):
    rng = np.random.default_rng(seed)
    runs = {}
    for L in sizes:
        for g in grid:
            c = np.ones((50, L // 2 + 1))
            c[:, L // 2] = 0.5 - (g - pc) * L + noise * rng.normal(size=50)
            runs[(g, L)] = c
    return runs


def test_crossing_recovers_known_point():
    grid = np.linspace(0.08, 0.14, 7)
    res = sm.crossing_from_runs(grid, _synthetic_runs(grid, (8, 12, 16), 0.109, 1e-3), 50)
    assert res.found
    assert res.estimate == pytest.approx(0.109, abs=2e-3)
    assert res.ci[0] <= res.estimate <= res.ci[1]


def test_no_crossing_reported():
    grid = np.linspace(0.08, 0.14, 4)
    res = sm.crossing_from_runs(grid, _synthetic_runs(grid, (8, 12), 0.3, 0.0), 10)
    assert not res.found
    assert "no crossing" in str(res)


def test_single_size_rejected():
    with pytest.raises(ValueError):
        sm.rbim_critical_scan([0.1, 0.12], [8], FAST)
    grid = [0.1, 0.12]
    with pytest.raises(ValueError):
        sm.crossing_from_runs(grid, _synthetic_runs(grid, (8,), 0.11, 0.0))


def test_cubic_tables_incidence():
    plaq_links, link_plaqs = sm.cubic_tables(3)
    assert plaq_links.shape == (81, 4)
    assert link_plaqs.shape == (81, 4)
    for f, links in enumerate(plaq_links):
        for li in links:
            assert f in link_plaqs[li]


def test_unit_loop_is_a_plaquette():
    L = 3
    plaq_links, _ = sm.cubic_tables(L)
    plaq_sets = {frozenset(pl) for pl in plaq_links}
    for loop in sm.loop_links(L, 1, 1):
        assert frozenset(loop) in plaq_sets


def test_wilson_loop_gauge_invariant():
    # a loop crosses every site it visits twice, so a site gauge flip cancels
    L = 4
    rng = np.random.default_rng(0)
    U = rng.choice([-1, 1], 3 * L ** 3)
    loops = sm.loop_links(L, 2, 1)
    before = np.prod(U[loops], axis=1)
    site = 5
    flip = [3 * site + d for d in range(3)]
    x, y, z = site % L, (site // L) % L, site // L ** 2
    for d, (dx, dy, dz) in enumerate([(1, 0, 0), (0, 1, 0), (0, 0, 1)]):
        flip.append(3 * sm._site3(x - dx, y - dy, z - dz, L) + d)
    U[flip] *= -1
    np.testing.assert_array_equal(np.prod(U[loops], axis=1), before)


def test_rpgm_zero_rate_is_one():
    run = sm.rpgm_run(0.0, 4, MCParams(n_samples=2, n_therm=20, n_meas=40, seed=1),
                      [(1, 1), (2, 2)])
    np.testing.assert_array_equal(run.wilson, 1.0)


def test_rpgm_loop_size_checked():
    with pytest.raises(ValueError):
        sm.rpgm_average_membrane(0.01, 4, 3, FAST)


def test_law_fit_on_synthetic_data():
    shapes = np.array(sm.DEFAULT_LOOPS)
    area = shapes[:, 0] * shapes[:, 1]
    perim = 2 * shapes.sum(axis=1)
    rng = np.random.default_rng(0)

    def run_for(w):
        wil = w[None, :] * (1 + 1e-3 * rng.normal(size=(40, len(w))))
        return sm.RPGMRun(0.0, 8, 1.0, shapes, wil, np.zeros(40), np.full(40, 0.5),
                          MCParams(n_samples=40))

    assert sm.area_perimeter_fit(run_for(np.exp(-0.05 * perim))).preferred == "perimeter"
    assert sm.area_perimeter_fit(run_for(np.exp(-0.3 * area - 0.05 * perim))).preferred == "area"


def test_seeding_is_reproducible():
    a = sm.rbim_run(0.1, 4, MCParams(n_samples=3, n_therm=10, n_meas=20, seed=8))
    b = sm.rbim_run(0.1, 4, MCParams(n_samples=3, n_therm=10, n_meas=20, seed=8))
    np.testing.assert_array_equal(a.corr, b.corr)
