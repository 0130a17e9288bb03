"""Acceptance criteria, each reported as one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in
the terminal summary under "acceptance criteria".
"""

import math
import time

import numpy as np
import pytest

import oracles
from verdicts import emit
from d2dpower import analysis as an
from d2dpower import cli
from d2dpower.centralized import (admission_control, centralized_control, constraint_ratios,
                                  is_feasible, minimal_powers, solve_power, spectral_radius)
from d2dpower.config import load_config
from d2dpower.distributed import (cellular_power_policy, d2d_power_moment, optimal_ps)
from d2dpower.montecarlo import Z_99, ExperimentSpec, run_experiment
from d2dpower.netmodel import SystemParams, db_to_linear, sample_realization, sinc, sinr_all

CONFIGS = "configs"
SUM_RATE_REF = {1e-5: (13.63, 13.98), 3e-5: (26.29, 27.83), 5e-5: (32.54, 33.93)}


# -- sum rate -----------------------------------------------------------------

@pytest.fixture(scope="module")
def sum_rate_runs():
    base = load_config(f"{CONFIGS}/sum_rate.cfg")
    out = {}
    for lam in SUM_RATE_REF:
        cfg = base.with_(d2d_density=lam)
        t0 = time.perf_counter()
        ana = float(cli.analyze_rows(cfg)[0][-1])
        t1 = time.perf_counter()
        rep = run_experiment(cfg.with_(beta_grid_db=(0.0,)).experiment())
        t2 = time.perf_counter()
        out[lam] = (ana, rep.rows[0].sum_rate_sim, rep.rows[0].sum_rate_ci, t2 - t0)
    return out


def test_sum_rate_analytic_reference(sum_rate_runs):
    ok = True
    parts = []
    for lam, (want, _) in SUM_RATE_REF.items():
        got = sum_rate_runs[lam][0]
        ok &= abs(got - want) <= 0.01 * want
        parts.append(f"lam={lam:g}: {got:.4f} vs {want}")
    assert emit("1a", ok, "analytic sum rate within 1%: " + "; ".join(parts))


def test_sum_rate_simulated_reference(sum_rate_runs):
    ok = True
    parts = []
    for lam, (_, want) in SUM_RATE_REF.items():
        _, got, _, secs = sum_rate_runs[lam]
        ok &= abs(got - want) <= 0.05 * want and secs < 120
        parts.append(f"lam={lam:g}: {got:.3f} vs {want} ({secs:.1f}s)")
    assert emit("1b", ok, "simulated sum rate (1000 drops) within 5%, <2 min each: " + "; ".join(parts))


def test_sum_rate_simulation_above_analytic(sum_rate_runs):
    gaps = {lam: sum_rate_runs[lam][1] - sum_rate_runs[lam][0] for lam in SUM_RATE_REF}
    ok = all(g > 0 for g in gaps.values())
    detail = "; ".join(f"lam={lam:g}: sim-analytic={g:+.3f}" for lam, g in gaps.items())
    assert emit("1c", ok, "simulated above analytic: " + detail)


# -- location-aware on-off numbers ------------------------------------------------

def onoff_budget_params():
    lam = 39 / (math.pi * 500 ** 2)
    return SystemParams(d2d_density=lam, p_avg_cell_w=0.1, p_max_cell_w=0.2, noise_w=0.0)


def test_onoff_power_coefficient():
    p = onoff_budget_params()
    coef = cellular_power_policy(p.cell_radius_m, p, 0.01, 10 ** 0.6).p_tilde
    ok = abs(coef - 0.375) <= 0.01 * 0.375
    assert emit("2a", ok, f"power coefficient {coef:.4f} W vs 0.375 W (1%)")


def test_onoff_coverage_reference_triple():
    p = onoff_budget_params()
    want = {0.5: 0.743, 0.7: 0.3298, 1.0: 0.216}
    got = {f: an.cell_coverage_optimal_onoff(f * 500.0, p, 0.01, 10 ** 0.6) for f in want}
    ok = all(abs(got[f] - want[f]) <= 1e-3 for f in want)
    detail = "; ".join(f"d={f}R: {got[f]:.4f} vs {want[f]}" for f in want)
    assert emit("2b", ok, "on-off coverage within 1e-3: " + detail)


# -- coverage reproductions ---------------------------------------------------

@pytest.mark.parametrize("lam", [2e-5, 5e-5])
def test_cell_coverage_closed_form_in_ci(lam):
    cfg = load_config(f"{CONFIGS}/cell_coverage.cfg").with_(d2d_density=lam)
    params = cfg.system_params()
    rep = run_experiment(cfg.experiment())
    worst = 0.0
    ok = True
    for r in rep.rows:
        closed = an.cell_coverage_closed_alpha4(params, db_to_linear(r.beta_db), cfg.ps)
        gap = abs(r.cell_cov_sim - closed)
        ok &= gap <= r.cell_cov_ci
        worst = max(worst, gap / r.cell_cov_ci if r.cell_cov_ci > 0 else math.inf)
    assert emit(f"3 (lam={lam:g})", ok, f"closed form inside 99% CI at every beta; max |gap|/CI = {worst:.2f}")


@pytest.mark.parametrize("lam", [2e-5, 5e-5])
def test_d2d_coverage_matches_simulation(lam):
    cfg = load_config(f"{CONFIGS}/d2d_coverage.cfg").with_(d2d_density=lam)
    params = cfg.system_params()
    rep = run_experiment(cfg.experiment())
    g_exact = g_approx = 0.0
    for r in rep.rows:
        b = db_to_linear(r.beta_db)
        g_exact = max(g_exact, abs(r.d2d_cov_sim - an.d2d_coverage(params, b)))
        g_approx = max(g_approx, abs(r.d2d_cov_sim - an.d2d_coverage_approx(params, b)))
    ok = g_exact <= 0.01 and g_approx <= 0.03
    assert emit(f"4 (lam={lam:g})", ok,
                f"max |sim - quadrature| = {g_exact:.4f} (<=0.01), max |sim - approx| = {g_approx:.4f} (<=0.03)")


# -- centralized ----------------------------------------------------------------

def _cap_feasible(cs):
    if not is_feasible(cs):
        return False
    p = np.linalg.solve(np.eye(cs.size) - cs.f_matrix, cs.b_vec)
    return bool(np.all(p >= 0) and np.all(p <= cs.p_max_vec))


def test_power_solver_vs_grid_oracle():
    rng = np.random.default_rng(505)
    gaps = []
    n = 0
    while n < 500:
        cs = oracles.random_constraint_system(rng, int(rng.integers(1, 7)), float(rng.uniform(-6, 6)))
        if not _cap_feasible(cs):
            continue
        n += 1
        p = solve_power(cs).p
        got = cs.g0 * p[0] / (cs.noise_w + cs.g0c @ p[1:])
        ref = oracles.best_cell_sinr_1d(cs)
        gaps.append(abs(got - ref) / ref if ref > 0 else math.inf)
    ok = all(g <= 1e-3 for g in gaps)
    assert emit("5a", ok, f"500 feasible instances K<=6, max relative cellular SINR gap {max(gaps):.2e} (<=1e-3)")


@pytest.fixture(scope="module")
def sparse_outcomes():
    params = load_config(f"{CONFIGS}/sparse_centralized.cfg").system_params()
    rng = np.random.default_rng(77)
    out = []
    for _ in range(60):
        real = sample_realization(params, rng)
        g = real.gain_matrix(params.pathloss_exp)
        for bdb in (0.0, 3.0, 9.0):
            b = db_to_linear(bdb)
            out.append((g, b, centralized_control(real, params, beta_cell=b, beta_d2d=b, gains=g)))
    return params, out


def test_admission_and_recomputed_sinr(sparse_outcomes):
    params, outs = sparse_outcomes
    rng = np.random.default_rng(506)
    ok = True
    for _ in range(500):
        cs = admission_control(oracles.random_constraint_system(rng, int(rng.integers(1, 7)),
                                                                float(rng.uniform(0, 12))))
        ok &= is_feasible(cs)
    bad = 0
    for g, b, o in outs:
        s = sinr_all(g, o.profile.p, params.noise_w)
        adm = list(o.admitted)
        d2d_ok = np.all(s[adm] >= b * (1 - 1e-9)) if adm else True
        alone_fallback = not adm and g[0, 0] * params.p_max_cell_w / params.noise_w < b
        cell_ok = s[0] >= b * (1 - 1e-9) or alone_fallback
        off_ok = np.all(np.delete(o.profile.p[1:], [a - 1 for a in adm]) == 0)
        caps_ok = o.profile.p[0] <= params.p_max_cell_w and np.all(o.profile.p[1:] <= params.p_max_d2d_w)
        bad += not (d2d_ok and cell_ok and off_ok and caps_ok)
    ok &= bad == 0
    assert emit("5b", ok, f"500 admission runs feasible; {len(outs)} drop outcomes, {bad} with a "
                          "violated target, cap or non-admitted transmitter")


def test_sparse_admitted_fraction():
    cfg = load_config(f"{CONFIGS}/sparse_centralized.cfg").with_(beta_grid_db=(3.0,))
    row = run_experiment(cfg.experiment()).rows[0]
    frac = row.admitted_fraction
    ok = abs(frac - 0.48) <= 0.05
    assert emit("5c", ok, f"admitted fraction at 3 dB over 1000 drops = {frac:.4f} (0.48 +- 0.05)")


# -- spectral radius ------------------------------------------------------------

def test_spectral_radius_vs_bisection():
    rng = np.random.default_rng(606)
    worst = {"eig": 0.0, "power": 0.0}
    for _ in range(100):
        n = int(rng.integers(1, 21))
        f = rng.exponential(size=(n, n)) * (rng.random((n, n)) < 0.7)
        f *= rng.uniform(0.05, 3.0) / max(n, 1)
        ref = oracles.rho_bisect(f)
        for m in worst:
            worst[m] = max(worst[m], abs(spectral_radius(f, method=m) - ref) / max(ref, 1.0))
    ok = max(worst.values()) <= 1e-8
    assert emit("6a", ok, f"100 matrices up to 20x20 vs bisection oracle: max error eig {worst['eig']:.1e}, "
                          f"power {worst['power']:.1e} (<=1e-8)")


def test_admission_trace_monotone(sparse_outcomes):
    _, outs = sparse_outcomes
    steps = [s for _, _, o in outs for s in o.removals]
    ok = all(s.rho_after <= s.rho_before * (1 + 1e-12) for s in steps)
    assert steps
    assert emit("6b", ok, f"spectral radius non-increasing over {len(steps)} removal steps")


# -- location-aware on-off optimality ----------------------------------------------

def test_two_point_policy_grid_optimality():
    rng = np.random.default_rng(707)
    base = SystemParams(p_avg_cell_w=0.1, p_max_cell_w=0.2, noise_w=0.0)
    moment, a = 0.01, 4.0
    grid = np.linspace(0.2 / 1e4, 0.2, 10_000)
    step = grid[1] - grid[0]
    worst = 0.0
    counts = {"max": 0, "avg": 0, "interior": 0}
    tuples = []
    # rejection-sample so each regime of the optimal power appears
    while len(tuples) < 20:
        lam = 10 ** rng.uniform(-6, -3.7)
        b0 = db_to_linear(rng.uniform(-6, 21))
        d = rng.uniform(25, 500)
        cp = cellular_power_policy(d, base.with_(d2d_density=lam), moment, b0)
        reg = "max" if cp.p_star == 0.2 else "avg" if cp.p_star == 0.1 else "interior"
        if counts[reg] < 7:
            counts[reg] += 1
            tuples.append((lam, b0, d))
    for lam, b0, d in tuples:
        p = base.with_(d2d_density=lam)
        # interference-limited coverage given the on power, from the PPP Laplace transform
        expo = math.pi * lam * moment * b0 ** (2 / a) * d ** 2 / sinc(2 / a)
        val = np.minimum(1.0, 0.1 / grid) * np.exp(-expo * grid ** (-2 / a))
        p_grid = grid[int(np.argmax(val))]
        cp = cellular_power_policy(d, p, moment, b0)
        worst = max(worst, abs(cp.p_star - p_grid) / step)
        assert cp.tx_prob == pytest.approx(min(1.0, 0.1 / cp.p_star), rel=1e-15)
    ok = worst <= 1.0 + 1e-9
    assert emit("7", ok, f"20 tuples, maximizer within {worst:.3f} grid steps of p* (<=1); tuples per regime "
                         + ", ".join(f"{k}={v}" for k, v in counts.items()))


# -- distributed optimality ----------------------------------------------------------

def test_optimal_probability_stationarity():
    d, a = 50.0, 4.0
    worst = 0.0
    n = 0
    for lam in (1e-5, 2e-5, 5e-5, 1e-4):
        for bdb in np.arange(-6.0, 30.01, 1.5):
            b = db_to_linear(bdb)
            ps = optimal_ps(lam, b, d, a)
            if ps < 1:
                n += 1
                worst = max(worst, abs(math.pi * lam * ps * b ** (2 / a) * d ** 2 / sinc(2 / a) - 1))
    ok = n > 0 and worst <= 1e-12
    assert emit("8a", ok, f"first-order condition on {n} points, max |residual| = {worst:.1e} (<=1e-12)")


def test_active_link_density():
    params = SystemParams(d2d_density=2e-5)
    b = db_to_linear(21.0)
    ps = optimal_ps(params.d2d_density, b, 50.0, 4.0)
    rep = run_experiment(ExperimentSpec(params, scheme="distributed", n_drops=10_000, seed=808,
                                        beta_grid_db=(21.0,)))
    mean = rep.rows[0].mean_active_links
    area = math.pi * params.cell_radius_m ** 2
    want = params.d2d_density * ps * area
    se = math.sqrt(want / 10_000)  # thinned PPP count in the cell is Poisson
    ok = abs(mean - want) <= 3 * se
    assert emit("8b", ok, f"active links per cell {mean:.4f} vs lam*Ps*pi*R^2 = {want:.4f}, "
                          f"{abs(mean - want) / se:.2f} SE (<=3)")


def test_distributed_equals_no_control_below_threshold():
    params = SystemParams(d2d_density=2e-5)
    bt = an.coverage_coefficients(params).beta_tilde
    grid = tuple(float(x) for x in np.arange(-6.0, 21.01, 3.0))
    nc = run_experiment(ExperimentSpec(params, n_drops=300, seed=809, beta_grid_db=grid))
    ds = run_experiment(ExperimentSpec(params, scheme="distributed", n_drops=300, seed=809, beta_grid_db=grid))
    below = [i for i, g in enumerate(grid) if db_to_linear(g) < bt]
    ok = bool(below) and all(nc.rows[i].values() == ds.rows[i].values() for i in below)
    assert emit("8c", ok, f"distributed identical to no control at {len(below)} grid points below "
                          f"{10 * math.log10(bt):.3f} dB")


# -- bound ordering ---------------------------------------------------------------------

def test_lower_bound_ordering():
    ok = True
    worst = math.inf
    for lam in (1e-6, 1e-5, 2e-5, 5e-5, 1e-4):
        p = SystemParams(d2d_density=lam)
        for b in (0.0, 0.25, 1.0, 4.0, 16.0):
            lb = an.cell_coverage_lower_bound(p, 1 / p.p_max_cell_w, 0.01, b)
            ex = an.cell_coverage_exact(p, an.ConstantPower(p.p_max_cell_w), 0.01, b)
            if b == 0:
                ok &= lb == ex == 1.0
            else:
                ok &= lb < ex
                worst = min(worst, ex - lb)
    assert emit("9", ok, f"5x5 grid: bound < exact for beta0 > 0 (min margin {worst:.2e}), equal at beta0 = 0")


# -- determinism ------------------------------------------------------------------------

@pytest.mark.parametrize("name,drops", [("baseline", 200), ("cell_coverage", 200), ("sparse_centralized", 20)])
def test_bit_identical_csv_across_workers(tmp_path, name, drops):
    texts = []
    for w in (1, 4):
        out = tmp_path / f"{name}_{w}.csv"
        rc = cli.main(["simulate", "--config", f"{CONFIGS}/{name}.cfg", "--drops", str(drops),
                       "--workers", str(w), "--out", str(out)])
        assert rc == 0
        texts.append(out.read_bytes())
    ok = texts[0] == texts[1]
    assert emit(f"10 ({name})", ok, f"CSV from 1 and 4 workers bit-identical ({len(texts[0])} bytes)")
