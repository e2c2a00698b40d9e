"""``sep-lab`` batch command line.

Every subcommand has a frozen config dataclass.  Values come from the
dataclass defaults, then an optional JSON ``--config`` file (or a previous
run manifest), then explicit flags.  Each run writes one CSV with ``#``
metadata lines and a JSON manifest next to it.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
import re
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from . import doublestate as ds
from . import fermion as fm
from . import gaussian as ga
from . import gibbs, models
from . import statmech as sm
from .pauli import ResourceError

log = logging.getLogger("seplab")


class SchemaError(ValueError):
    pass


# ---- configs -----------------------------------------------------------------------


@dataclass(frozen=True)
class GibbsVerifyConfig:
    model: str = "cluster1d_4"
    p: float = 0.3
    rates: str = ""          # per-group override, e.g. "a=0.3,b=0.1"
    tol: float = 1e-10


@dataclass(frozen=True)
class ClusterConfig:
    dim: int = 1
    sizes: str = "4"         # "N" in 1d, "LxxLy" in 2d, "L" in 3d
    pa: float = 0.2          # sublattice a (1d), vertices (2d), edges (3d)
    pb: float = 0.3          # sublattice b (1d), edges (2d), faces (3d)
    cda_states: int = 3
    export: str = ""         # optional model-file path
    tol: float = 1e-10


@dataclass(frozen=True)
class MCConfig:
    samples: int = 200
    therm: int = 1000
    meas: int = 2000
    every: int = 1

    def params(self, seed: int) -> sm.MCParams:
        return sm.MCParams(self.samples, self.therm, self.meas, self.every, seed)


@dataclass(frozen=True)
class RbimCorrConfig(MCConfig):
    p: float = 0.05
    L: int = 16


@dataclass(frozen=True)
class RbimScanConfig(MCConfig):
    grid: str = "0.08:0.14:7"
    L: tuple = (8, 12, 16)
    boot: int = 200


@dataclass(frozen=True)
class RpgmWilsonConfig(MCConfig):
    p: float = 0.015
    L: int = 8
    samples: int = 100
    therm: int = 500
    meas: int = 1000


@dataclass(frozen=True)
class RpgmScanConfig(MCConfig):
    grid: str = "0.015,0.03,0.045,0.06,0.08"
    L: int = 8
    samples: int = 100
    therm: int = 500
    meas: int = 1000


@dataclass(frozen=True)
class ModcommConfig:
    L: int = 36
    p: float = 0.0
    m: str = "uniform"


@dataclass(frozen=True)
class EspecConfig:
    Lx: int = 60
    Ly: int = 30
    p: float = 0.04
    bc_y: str = "antiperiodic"


@dataclass(frozen=True)
class PairingConfig:
    L: int = 48
    p: float = 0.04


@dataclass(frozen=True)
class CdaConfig:
    modes: int = 5
    trials: int = 20
    route_L: int = 6          # lattice for the vacuum pairing-route comparison
    route_p: tuple = (0.02, 0.04, 0.1, 0.3)
    tol: float = 1e-8


@dataclass(frozen=True)
class DoubleEspecConfig:
    Lx: int = 60
    Ly: int = 16
    p: float = 0.05
    mode: str = "linear"


@dataclass(frozen=True)
class CjCheckConfig:
    modes: int = 2
    p: float = 0.5
    tol: float = 1e-12


@dataclass(frozen=True)
class SelftestConfig:
    pass


def parse_grid(text: str) -> list[float]:
    """``lo:hi:n`` (inclusive, ``n`` points) or a comma list."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise SchemaError(f"grid {text!r} must be lo:hi:n")
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        if n < 1:
            raise SchemaError("grid needs at least one point")
        return [round(float(v), 12) for v in np.linspace(lo, hi, n)]
    return [float(v) for v in text.split(",") if v.strip()]


def _coerce(value, default, name: str):
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        if str(value).lower() in ("1", "true", "yes"):
            return True
        if str(value).lower() in ("0", "false", "no"):
            return False
        raise SchemaError(f"{name}: expected a boolean, got {value!r}")
    try:
        if isinstance(default, tuple):
            if not isinstance(value, str):
                value = ",".join(map(str, value))
            items = value.split(",")
            kind = type(default[0]) if default else float
            return tuple(kind(v) for v in items if str(v).strip())
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if isinstance(default, float):
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise SchemaError(f"{name}: cannot read {value!r} as {type(default).__name__}") from None


def build_config(cls, file_values: dict, flag_values: dict):
    known = {f.name: f.default for f in fields(cls)}
    unknown = (set(file_values) | set(flag_values)) - set(known)
    if unknown:
        raise SchemaError(f"unknown config keys for {cls.__name__}: {sorted(unknown)}")
    merged = dict(known)
    for src in (file_values, flag_values):
        for k, v in src.items():
            if v is not None:
                merged[k] = _coerce(v, known[k], k)
    return cls(**merged)


def config_snapshot(cfg) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(cfg).items()}


def load_config_file(path: str, command: str) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise SchemaError(f"config file {path} not found") from None
    except json.JSONDecodeError as err:
        raise SchemaError(f"config file {path} is not valid JSON: {err}") from None
    if not isinstance(data, dict):
        raise SchemaError("config file must hold a JSON object")
    if "config" in data and "command" in data:
        # a previous manifest
        if data["command"] != command:
            raise SchemaError(f"manifest is for {data['command']!r}, not {command!r}")
        data = data["config"]
    return data


# ---- output ------------------------------------------------------------------------


@dataclass
class Table:
    columns: list
    rows: list = dataclasses.field(default_factory=list)
    meta: dict = dataclasses.field(default_factory=dict)

    def add(self, *values) -> None:
        if len(values) != len(self.columns):
            raise ValueError("row length does not match the header")
        self.rows.append(values)


@dataclass
class Outcome:
    table: Table
    summary: str
    ok: bool = True
    flagged: bool = False
    seeds: dict = dataclasses.field(default_factory=dict)
    strict_issue: str = ""   # e.g. a missing crossing; an error only under --strict


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def render_csv(table: Table, header_meta: dict) -> str:
    buf = io.StringIO()
    for k, v in {**header_meta, **table.meta}.items():
        buf.write(f"# {k}: {v}\n")
    buf.write(",".join(table.columns) + "\n")
    for row in table.rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def _mc_seeds(mc: sm.MCParams, stream_tag: int, points: list) -> dict:
    """Per-sample seeds for every ``(p, L)`` point, as the workers derive them."""
    out = {}
    for p, L in points:
        stream = sm._p_stream(p, L, stream_tag)
        out[f"p={p},L={L}"] = [sm.sample_seed(mc.seed, stream, i) for i in range(mc.n_samples)]
    return out


# ---- commands ----------------------------------------------------------------------

_MODEL_NAME = re.compile(r"^(cluster1d|cluster2d|cluster3d|kitaev|levingu)_(\d+(?:x\d+)*)$")
_BUILDERS = {"cluster1d": "cluster_1d", "cluster2d": "cluster_2d", "cluster3d": "cluster_3d",
             "kitaev": "kitaev_chain", "levingu": "levin_gu"}


def resolve_model(spec: str):
    """Built-in ``<kind>_<sizes>`` (e.g. ``cluster1d_4``, ``cluster2d_2x2``) or a model file."""
    m = _MODEL_NAME.match(spec)
    if m:
        sizes = [int(v) for v in m.group(2).split("x")]
        lm = models.build(_BUILDERS[m.group(1)], *sizes)
        return lm.model, lm
    path = Path(spec)
    if not path.exists():
        raise SchemaError(f"model {spec!r} is neither a built-in name nor a file")
    return gibbs.loads_model(path.read_text(), path.stem), None


def cmd_gibbs_verify(cfg: GibbsVerifyConfig, seed: int) -> Outcome:
    model, lm = resolve_model(cfg.model)
    if cfg.rates:
        if lm is None:
            raise SchemaError("per-group rates need a built-in model")
        groups = dict(kv.split("=") for kv in cfg.rates.split(","))
        rates = lm.rates(**{k.strip(): float(v) for k, v in groups.items()})
    else:
        rates = cfg.p
    t0 = time.perf_counter()
    gd = gibbs.decohere_ground_state(model, rates)
    rho = gibbs.dense_channel_oracle(model, rates)
    dev_prod = float(np.max(np.abs(rho - gd.to_dense())))
    dev_exp = float(np.max(np.abs(rho - gd.exponential_dense())))
    trace_dev = float(abs(np.trace(rho) - 1))
    ok = max(dev_prod, dev_exp, trace_dev) < cfg.tol
    t = Table(["model", "n_qubits", "rates", "maxdev_product", "maxdev_exponential", "trace_dev",
               "pass"])
    t.add(cfg.model, model.n_qubits, cfg.rates or cfg.p, dev_prod, dev_exp, trace_dev, ok)
    word = "PASS" if ok else "FAIL"
    return Outcome(t, f"{word} maxdev {max(dev_prod, dev_exp):.1e} "
                      f"({time.perf_counter() - t0:.2f} s)", ok)


def _cluster_model(cfg: ClusterConfig) -> models.LatticeModel:
    try:
        sizes = [int(v) for v in cfg.sizes.lower().split("x")]
    except ValueError:
        raise SchemaError(f"bad sizes {cfg.sizes!r}") from None
    if cfg.dim == 1 and len(sizes) == 1:
        return models.cluster_1d(sizes[0])
    if cfg.dim == 2 and len(sizes) in (1, 2):
        return models.cluster_2d(sizes[0], sizes[-1])
    if cfg.dim == 3 and len(sizes) == 1:
        return models.cluster_3d(sizes[0])
    raise SchemaError(f"sizes {cfg.sizes!r} do not fit dim {cfg.dim}")


def _cluster_1d_rows(lm, cfg: ClusterConfig, seed: int, t: Table) -> float:
    N = lm.sizes[0]
    rates = lm.rates(a=cfg.pa, b=cfg.pb)
    rho = models.decohered_state(lm, rates)
    probs = models.sector_probabilities_dense(lm, rates, rho)
    worst = 0.0
    for q, pq in sorted(probs.items()):
        label = "".join(map(str, q))
        t.add(label, pq, "probability", "", pq, "", "")
        if pq < 1e-12:
            continue
        for sub, p, charge in (("a", cfg.pa, q[0]), ("b", cfg.pb, q[1])):
            for ell in range(1, N):
                obs = models.string_operator_1d(lm, sub, 0, ell - 1)
                dense = models.sector_observable_dense(lm, rates, q, obs, rho)
                exact = models.string_order_1d_exact(p, ell, N, charge)
                worst = max(worst, abs(dense - exact))
                t.add(label, pq, f"string_{sub}", ell, dense, exact, abs(dense - exact))
    # disorder operators in random CDA states
    rng = np.random.default_rng(seed)
    for _ in range(cfg.cda_states):
        bits = tuple(int(b) for b in rng.integers(0, 2, 2 * N))
        psi = models.cda_state_dense(lm, rates, bits)
        label = "m=" + "".join(map(str, bits))
        for sub, p, own, other in (("a", cfg.pb, 0, 1), ("b", cfg.pa, 1, 0)):
            u = (-1) ** sum(bits[other::2])
            for ell in range(2, N):
                obs = models.disorder_operator_1d(lm, sub, 0, ell - 1)
                sign = (-1) ** sum(bits[own:2 * ell:2])
                exact = sign * models.disorder_op_1d_exact(p, N, u)
                dense = models.expectation(psi, obs)
                worst = max(worst, abs(dense - exact))
                t.add(label, "", f"disorder_{sub}", ell, dense, exact, abs(dense - exact))
    return worst


def _cluster_2d_rows(lm, cfg: ClusterConfig, t: Table) -> float:
    rates = lm.rates(v=cfg.pa, e=cfg.pb)
    rho = models.decohered_state(lm, rates)
    probs = models.sector_probabilities_dense(lm, rates, rho)
    membrane = [0, 1]
    string = [lm.extras["hedge_id"](0, 0)]
    enum = models.cluster2d_sector_enumeration(lm, cfg.pa, cfg.pb, membrane=membrane,
                                               string=string)
    m_op, s_op = models.membrane_2d(lm, membrane), models.string_2d(lm, string)
    worst = 0.0
    for q, pq in sorted(probs.items()):
        label = "".join(map(str, q))
        ref = enum[tuple(q)]
        # relative where the sector is populated, absolute for empty sectors
        dev = abs(pq - ref["probability"])
        if ref["probability"] > 1e-12:
            dev /= ref["probability"]
        worst = max(worst, dev)
        t.add(label, pq, "probability", "", pq, ref["probability"], dev)
        if pq < 1e-12:
            continue
        for name, op in (("membrane", m_op), ("string", s_op)):
            dense = models.sector_observable_dense(lm, rates, q, op, rho)
            dev = abs(dense - ref[name])
            worst = max(worst, dev)
            t.add(label, pq, name, len(membrane if name == "membrane" else string), dense,
                  ref[name], dev)
    return worst


def cmd_cluster(cfg: ClusterConfig, seed: int) -> Outcome:
    """Per-sector probabilities and observables, dense against closed form or enumeration."""
    lm = _cluster_model(cfg)
    if cfg.export:
        Path(cfg.export).write_text(gibbs.dumps_model(lm.model))
    if lm.n_qubits > models.SECTOR_QUBIT_CAP:
        raise ResourceError(f"{lm.kind} has {lm.n_qubits} qubits; dense sectors stop at "
                            f"{models.SECTOR_QUBIT_CAP} (use `rpgm` for the 3d observables)")
    t = Table(["sector", "probability", "observable", "length", "dense", "reference", "abs_dev"])
    if cfg.dim == 1:
        worst = _cluster_1d_rows(lm, cfg, seed, t)
    else:
        worst = _cluster_2d_rows(lm, cfg, t)
    ok = worst < cfg.tol
    return Outcome(t, f"{'PASS' if ok else 'FAIL'} {lm.kind} sectors maxdev {worst:.1e}", ok,
                   seeds={"cda": seed})


def cmd_rbim_corr(cfg: RbimCorrConfig, seed: int) -> Outcome:
    mc = cfg.params(seed)
    run = sm.rbim_run(cfg.p, cfg.L, mc)
    t = Table(["p", "L", "r", "mean", "stderr", "n_disorder", "tau_int", "seed"])
    for r in range(run.corr.shape[1]):
        est = sm._estimate(run.corr[:, r], run)
        t.add(cfg.p, cfg.L, r, est.mean, est.stderr, est.n_disorder, est.tau_int, seed)
    nish = sm.nishimori_energy_check(run)
    t.meta["nishimori_energy"] = f"{nish['mean']:.6f} target {nish['target']:.6f} z {nish['z']:.2f}"
    t.meta["flag_fraction"] = f"{run.flag_fraction:.3f}"
    xi = sm.correlation_length_fit(run.corr.mean(axis=0), cfg.L)
    t.meta["correlation_length"] = f"{xi:.4g}"
    summ = f"[<zz>^2] at r=L/2: {run.corr[:, -1].mean():.4f}; xi {xi:.3g}"
    return Outcome(t, summ, True, run.flagged, _mc_seeds(mc, 1, [(cfg.p, cfg.L)]))


def cmd_rbim_scan(cfg: RbimScanConfig, seed: int) -> Outcome:
    mc = cfg.params(seed)
    grid = parse_grid(cfg.grid)
    scan = sm.rbim_critical_scan(grid, list(cfg.L), mc, cfg.boot)
    cr = scan.crossing
    t = Table(["p", "L", "ratio", "ratio_err", "nishimori_z", "flag_fraction"])
    for L in cfg.L:
        for i, p in enumerate(grid):
            run = scan.runs[(float(p), L)]
            t.add(p, L, cr.ratio[L][i], cr.ratio_err[L][i], scan.nishimori[(float(p), L)]["z"],
                  run.flag_fraction)
    t.meta["crossing"] = str(cr)
    flagged = any(r.flagged for r in scan.runs.values())
    summ = (f"p_c {cr.estimate:.4f} CI [{cr.ci[0]:.4f}, {cr.ci[1]:.4f}]" if cr.found
            else "no crossing in grid")
    pts = [(float(p), L) for L in cfg.L for p in grid]
    return Outcome(t, summ, True, flagged, _mc_seeds(mc, 1, pts),
                   "" if cr.found else "no crossing in grid")


def cmd_rpgm_wilson(cfg: RpgmWilsonConfig, seed: int) -> Outcome:
    mc = cfg.params(seed)
    shapes = [s for s in sm.DEFAULT_LOOPS if max(s) <= cfg.L // 2]
    run = sm.rpgm_run(cfg.p, cfg.L, mc, shapes)
    t = Table(["p", "L", "Ra", "Rb", "mean", "stderr", "n_disorder", "tau_int", "seed"])
    for j, (a, b) in enumerate(run.shapes):
        est = sm._estimate(run.wilson[:, j], run)
        t.add(cfg.p, cfg.L, int(a), int(b), est.mean, est.stderr, est.n_disorder, est.tau_int,
              seed)
    fit = sm.area_perimeter_fit(run)
    t.meta["law"] = f"{fit.preferred} (AIC area {fit.aic_area:.2f}, perimeter {fit.aic_perimeter:.2f})"
    return Outcome(t, f"preferred law: {fit.preferred}", True, run.flagged,
                   _mc_seeds(mc, 2, [(cfg.p, cfg.L)]))


def cmd_rpgm_scan(cfg: RpgmScanConfig, seed: int) -> Outcome:
    mc = cfg.params(seed)
    grid = parse_grid(cfg.grid)
    shapes = [s for s in sm.DEFAULT_LOOPS if max(s) <= cfg.L // 2]
    scan = sm.rpgm_scan(grid, cfg.L, mc, shapes)
    t = Table(["p", "L", "preferred", "aic_area", "aic_perimeter", "area_coeff", "area_coeff_err",
               "nishimori_z"])
    for p in sorted(scan.fits):
        f = scan.fits[p]
        t.add(p, cfg.L, f.preferred, f.aic_area, f.aic_perimeter, f.area_coeff, f.area_coeff_err,
              scan.nishimori[p]["z"])
    lo, hi = scan.bracket
    found = not math.isnan(lo)
    t.meta["bracket"] = f"({lo}, {hi})"
    flagged = any(r.flagged for r in scan.runs.values())
    summ = f"perimeter->area between p={lo} and p={hi}" if found else "no law change in grid"
    return Outcome(t, summ, True, flagged, _mc_seeds(mc, 2, [(p, cfg.L) for p in grid]),
                   "" if found else "no perimeter-to-area change in grid")


def cmd_pwave_modcomm(cfg: ModcommConfig, seed: int) -> Outcome:
    res = ga.cda_modular_commutator(cfg.L, cfg.p, cfg.m, seed=seed)
    ratio = res.value / (math.pi / 6)
    t = Table(["L", "p", "m", "J", "J_over_J0", "clipped", "flagged"])
    t.add(cfg.L, cfg.p, cfg.m, res.value, ratio, res.clipped, res.flagged)
    return Outcome(t, f"J/J0 = {ratio:.4f}", True, res.flagged)


def cmd_pwave_espec(cfg: EspecConfig, seed: int) -> Outcome:
    spec = ga.cda_entanglement_spectrum(cfg.Lx, cfg.Ly, cfg.p, bc_y=cfg.bc_y)
    t = Table(["k_y", "nu"])
    order = np.lexsort((spec.nu, spec.k)) if spec.resolved else np.argsort(spec.nu)
    for i in order:
        t.add(float(spec.k[i]) if spec.resolved else math.nan, float(spec.nu[i]))
    t.meta["min_gap"] = repr(spec.min_gap())
    t.meta["resolved"] = str(spec.resolved)
    return Outcome(t, f"min |nu| = {spec.min_gap():.4g}")


def cmd_pwave_pairing(cfg: PairingConfig, seed: int) -> Outcome:
    model = ga.BdgModel(cfg.L, cfg.L)
    g = ga.pair_amplitude(model, cfg.p)
    fit = ga.pairing_decay_fit(model, cfg.p)
    t = Table(["r", "abs_amplitude"])
    for r in range(1, cfg.L // 2 + 1):
        t.add(r, float(abs(g[0, r])))
    t.meta["fit"] = (f"{fit.preferred} (AIC power {fit.aic_power:.2f}, exponential "
                     f"{fit.aic_exponential:.2f}, xi {fit.length:.3g})")
    return Outcome(t, f"preferred decay: {fit.preferred}, AIC margin {fit.margin:.1f}")


def cmd_pwave_cda(cfg: CdaConfig, seed: int) -> Outcome:
    rng = np.random.default_rng(seed)
    t = Table(["check", "trial", "p", "m", "abs_dev"])
    worst = 0.0
    for i in range(cfg.trials):
        n = cfg.modes
        p = float(rng.uniform(0.02, 0.45))
        M0 = ga.random_pure_covariance(n, rng)
        K = ga.decohered_generator(M0, p)
        m = rng.integers(0, 2, n)
        got = ga.cda_state_covariance(K, m).covariance.matrix
        want = ga.cda_dense_oracle(K, m).matrix
        dev = float(np.max(np.abs(got - want)))
        worst = max(worst, dev)
        t.add("dense", i, p, "".join(map(str, m)), dev)
    model = ga.BdgModel(cfg.route_L, cfg.route_L)
    M0 = ga.ground_state_covariance(model)
    vac = np.zeros(model.n_sites, dtype=int)
    route = 0.0
    for i, p in enumerate(cfg.route_p):
        got = ga.cda_state_covariance(ga.decohered_generator(M0, p), vac).covariance.matrix
        want = ga.thouless_covariance(ga.pairing_matrix(model, p)).matrix
        dev = float(np.max(np.abs(got - want)))
        route = max(route, dev)
        t.add("pairing_route", i, p, "vacuum", dev)
    ok = max(worst, route) < cfg.tol
    return Outcome(t, f"{'PASS' if ok else 'FAIL'} CDA vs dense maxdev {worst:.1e}, "
                      f"vs pairing route {route:.1e}", ok)


def cmd_double_espec(cfg: DoubleEspecConfig, seed: int) -> Outcome:
    model = ga.BdgModel(cfg.Lx, cfg.Ly, bc_x="antiperiodic", bc_y="open")
    spec = ds.double_state_entanglement_spectrum(model, cfg.p, range(cfg.Ly // 2), cfg.mode)
    t = Table(["k_x", "nu"])
    order = np.lexsort((spec.nu, spec.k)) if spec.resolved else np.argsort(spec.nu)
    for i in order:
        t.add(float(spec.k[i]) if spec.resolved else math.nan, float(spec.nu[i]))
    t.meta["min_gap"] = repr(spec.min_gap())
    return Outcome(t, f"min |nu| = {spec.min_gap():.4g}")


def cmd_double_cj(cfg: CjCheckConfig, seed: int) -> Outcome:
    rng = np.random.default_rng(seed)
    rep = ds.cj_transport_rules_dense(ds.random_even_density(cfg.modes, rng), cfg.modes)
    naive = ds.naive_map_counterexample(cfg.p, rng=rng)
    t = Table(["check", "value"])
    t.add("transport_max_deviation", rep.max_deviation)
    t.add("naive_idempotency_defect", naive.naive_idempotency_defect)
    t.add("channel_idempotency_defect", naive.channel_idempotency_defect)
    t.add("corrected_vs_channel", naive.corrected_vs_channel)
    ok = rep.ok(cfg.tol) and naive.channel_idempotency_defect < cfg.tol
    if cfg.p == 0.5:
        ok = ok and naive.naive_idempotency_defect > 0.1
    return Outcome(t, f"{'PASS' if ok else 'FAIL'} transport {rep.max_deviation:.1e}, naive "
                      f"defect {naive.naive_idempotency_defect:.3f}", ok)


# ---- selftest ------------------------------------------------------------------------


@dataclass
class CheckResult:
    module: str
    op: str
    inputs: str
    deviation: float
    tol: float

    @property
    def ok(self) -> bool:
        return bool(self.deviation < self.tol)


def selftest_checks(seed: int = 0) -> list[CheckResult]:
    """Every dense-oracle agreement at minimal sizes."""
    from . import pauli

    rng = np.random.default_rng(seed)
    out = []

    a, b = pauli.random_pauli(4, rng), pauli.random_pauli(4, rng)
    dev = float(np.max(np.abs(pauli.to_dense(a * b) - pauli.to_dense(a) @ pauli.to_dense(b))))
    out.append(CheckResult("pauli", "multiply", "n=4 random", dev, 1e-12))

    lm = models.cluster_1d(3)
    gd = gibbs.decohere_ground_state(lm.model, 0.3)
    dev = float(np.max(np.abs(gibbs.dense_channel_oracle(lm.model, 0.3) - gd.to_dense())))
    out.append(CheckResult("gibbs", "dense_channel_oracle", "cluster1d_3 p=0.3", dev, 1e-10))

    dev = 0.0
    for p in (0.1, 0.25, 0.4):
        rates = lm.rates(a=0.2, b=p)
        rho = models.decohered_state(lm, rates)
        for q, pq in models.sector_probabilities_dense(lm, rates, rho).items():
            if pq > 1e-12:
                obs = models.string_operator_1d(lm, "b", 0, 1)
                v = models.sector_observable_dense(lm, rates, q, obs, rho)
                dev = max(dev, abs(v - models.string_order_1d_exact(p, 2, 3, q[1])))
    out.append(CheckResult("models", "string_order_1d_exact", "N=3", dev, 1e-10))

    val = sm.enumerate_oracle_2d(0.0, 2, 1)
    out.append(CheckResult("statmech", "enumerate_oracle_2d", "p=0 L=2", abs(val - 1), 1e-12))
    val, _ = sm.ising1d_correlation_exact(math.atanh(0.5), 4)
    out.append(CheckResult("statmech", "ising1d_correlation_exact", "tanh=0.5 d=4",
                           abs(val - 0.0625), 1e-12))

    n = 4
    M = ga.random_pure_covariance(n, rng)
    rho, _ = ga.dense_channel_oracle_fermionic(fm.gaussian_density(M.matrix), n, 0.2)
    dev = float(np.max(np.abs(fm.covariance_of(rho, n) - ga.apply_majorana_channel(M, 0.2).matrix)))
    out.append(CheckResult("gaussian", "apply_majorana_channel", "n=4 p=0.2", dev, 1e-10))

    K = ga.decohered_generator(ga.random_pure_covariance(4, rng), 0.15)
    m = [1, 0, 1, 1]
    dev = float(np.max(np.abs(ga.cda_state_covariance(K, m).covariance.matrix
                              - ga.cda_dense_oracle(K, m).matrix)))
    out.append(CheckResult("gaussian", "cda_state_covariance", "n=4 p=0.15", dev, 1e-8))

    bdg = ga.BdgModel(2, 2)
    got = ga.cda_state_covariance(ga.decohered_generator(ga.ground_state_covariance(bdg), 0.1),
                                  [0] * 4).covariance.matrix
    dev = float(np.max(np.abs(got - ga.thouless_covariance(ga.pairing_matrix(bdg, 0.1)).matrix)))
    out.append(CheckResult("gaussian", "pairing_function", "2x2 p=0.1 vacuum", dev, 1e-8))

    M = ga.random_pure_covariance(5, rng)
    A, B, C = [0], [1, 2], [3]
    dev = abs(ga.modular_commutator(M, A, B, C).value - ga.modular_commutator_dense(M, A, B, C))
    out.append(CheckResult("gaussian", "modular_commutator", "n=5 A=0 B=1,2 C=3", dev, 1e-6))

    rep = ds.cj_transport_rules_dense(ds.random_even_density(2, rng), 2)
    out.append(CheckResult("doublestate", "cj_transport_rules_dense", "n=2", rep.max_deviation,
                           1e-12))
    Mm = ga.random_mixed_covariance(2, rng)
    dev = ds.doubled_channel_check(Mm, 0.3)
    out.append(CheckResult("doublestate", "doubled_channel_check", "n=2 p=0.3", dev, 1e-10))
    rho = fm.gaussian_density(ga.random_pure_covariance(2, rng).matrix)
    T = ds.fermionic_transpose_dense(rho, 2)
    dev = float(np.max(np.abs(fm.covariance_of(T, 2)
                              - ds.transpose_covariance_rule(fm.covariance_of(rho, 2)))))
    out.append(CheckResult("doublestate", "fermionic_transpose_dense", "n=2", dev, 1e-10))
    return out


def cmd_selftest(cfg: SelftestConfig, seed: int) -> Outcome:
    t0 = time.perf_counter()
    checks = selftest_checks(seed)
    t = Table(["module", "op", "inputs", "deviation", "tol", "pass"])
    for c in checks:
        t.add(c.module, c.op, c.inputs, c.deviation, c.tol, c.ok)
    bad = [c for c in checks if not c.ok]
    lines = [f"{'ok  ' if c.ok else 'FAIL'} {c.module}.{c.op} [{c.inputs}] dev {c.deviation:.2e}"
             for c in checks]
    lines.append(f"{len(checks) - len(bad)}/{len(checks)} checks passed in "
                 f"{time.perf_counter() - t0:.2f} s")
    return Outcome(t, "\n".join(lines), not bad)


# ---- dispatch ----------------------------------------------------------------------

COMMANDS: dict[tuple, tuple[type, Callable, bool]] = {
    ("gibbs", "verify"): (GibbsVerifyConfig, cmd_gibbs_verify, False),
    ("cluster",): (ClusterConfig, cmd_cluster, False),
    ("rbim", "corr"): (RbimCorrConfig, cmd_rbim_corr, True),
    ("rbim", "scan"): (RbimScanConfig, cmd_rbim_scan, True),
    ("rpgm", "wilson"): (RpgmWilsonConfig, cmd_rpgm_wilson, True),
    ("rpgm", "scan"): (RpgmScanConfig, cmd_rpgm_scan, True),
    ("pwave", "modcomm"): (ModcommConfig, cmd_pwave_modcomm, False),
    ("pwave", "espec"): (EspecConfig, cmd_pwave_espec, False),
    ("pwave", "pairing"): (PairingConfig, cmd_pwave_pairing, False),
    ("pwave", "cda"): (CdaConfig, cmd_pwave_cda, False),
    ("double", "espec"): (DoubleEspecConfig, cmd_double_espec, False),
    ("double", "cj-check"): (CjCheckConfig, cmd_double_cj, False),
    ("selftest",): (SelftestConfig, cmd_selftest, False),
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=2024, help="master seed")
    p.add_argument("--strict", action="store_true",
                   help="promote flagged estimates and missing crossings to errors")
    p.add_argument("--out", default="sep-lab-out", help="output directory")
    p.add_argument("--config", help="JSON config file or a previous run manifest")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_fields(p: argparse.ArgumentParser, cls) -> None:
    for f in fields(cls):
        flag = "--" + f.name.replace("_", "-")
        nargs = "+" if isinstance(f.default, tuple) else None
        p.add_argument(flag, dest=f"cfg_{f.name}", default=None, nargs=nargs,
                       help=f"default: {f.default!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sep-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"sep-lab {__version__}")
    sub = parser.add_subparsers(dest="group", required=True)
    groups: dict[str, argparse._SubParsersAction] = {}
    for key, (cls, _, _) in COMMANDS.items():
        if len(key) == 1:
            p = sub.add_parser(key[0])
        else:
            if key[0] not in groups:
                g = sub.add_parser(key[0])
                groups[key[0]] = g.add_subparsers(dest="action", required=True)
            p = groups[key[0]].add_parser(key[1])
        _add_common(p)
        _add_fields(p, cls)
    return parser


def run(argv: list[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    key = (args.group, args.action) if getattr(args, "action", None) else (args.group,)
    cls, fn, is_mc = COMMANDS[key]
    name = " ".join(key)
    try:
        file_values = load_config_file(args.config, name) if args.config else {}
        flags = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_")}
        cfg = build_config(cls, file_values, flags)
    except SchemaError as err:
        print(f"sep-lab: config error: {err}", file=sys.stderr)
        return 2

    t0 = time.time()
    try:
        outcome = fn(cfg, args.seed)
    except (ResourceError, SchemaError, ValueError) as err:
        print(f"sep-lab {name}: error: {err}", file=sys.stderr)
        return 2
    wall = time.time() - t0

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = "_".join(key).replace("-", "_")
    header = {"command": name, "version": __version__, "seed": args.seed,
              "config": json.dumps(config_snapshot(cfg), sort_keys=True)}
    csv_text = render_csv(outcome.table, header)
    csv_path = out_dir / f"{stem}.csv"
    csv_path.write_text(csv_text, encoding="utf-8")
    manifest = {
        "command": name,
        "argv": ["sep-lab", *argv],
        "config": config_snapshot(cfg),
        "master_seed": args.seed,
        "seed_scheme": "SeedSequence([master, stream(p, L, model), sample index])" if is_mc
        else "numpy default_rng(master)",
        "task_seeds": outcome.seeds,
        "workers": os.environ.get(sm.WORKERS_ENV, "1"),
        "version": __version__,
        "wall_clock_s": round(wall, 3),
        "outputs": {csv_path.name: hashlib.sha256(csv_text.encode()).hexdigest()},
        "ok": bool(outcome.ok),
        "flagged": bool(outcome.flagged),
        "strict_issue": outcome.strict_issue,
    }
    (out_dir / f"{stem}.manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    print(outcome.summary)
    if not outcome.ok:
        return 1
    if args.strict and (outcome.flagged or outcome.strict_issue):
        why = outcome.strict_issue or "flagged estimate"
        print(f"sep-lab: {why} promoted to error (--strict)", file=sys.stderr)
        return 3
    return 0


def main(argv: list[str] | None = None) -> int:
    return run(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
