"""Acceptance suite: one PASS/FAIL line per criterion (see the terminal summary).

Trajectory criteria run at N = 14; ``--full-scale`` reruns them at N = 40
with unchanged thresholds. Runs with the Lamb shift enabled are reported as
INFO lines next to the default runs.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from dwrelax.analysis import collapse_metric, fluctuation, fluctuation_observable, rescale_time
from dwrelax.bath import BathSpec, rate_W, time_domain_gain, transition_operator_asymptotic
from dwrelax.expcli import parse_config, run
from dwrelax.fock import SystemSpec, build_basis, build_hamiltonian, diagonalize, ground_state, number_operator
from dwrelax.liouville import build_redfield, evolve, geometric_grid, lindblad_liouvillian, steady_state

GRID = {"t_min": 1e-3, "t_max": 1e7, "ratio": 10 ** 0.05}


def config(N, U, T, wc, lamb=False, gamma=0.01):
    return parse_config({
        "schema_version": 1,
        "name": f"N{N}-U{U:g}-T{T:g}-wc{wc:g}" + ("-lamb" if lamb else ""),
        "system": {"N": N, "J": 1.0, "U": U},
        "solver": "redfield",
        "bath": {"gamma": gamma, "T": T, "omega_c": wc, "lamb_shift": lamb},
        "grid": GRID,
    })


@pytest.fixture(scope="module")
def N_traj(full_scale):
    return 40 if full_scale else 14


@pytest.fixture(scope="module")
def runs(N_traj):
    cache = {}

    def get(U, T, wc, lamb=False):
        key = (U, T, wc, lamb)
        if key not in cache:
            cache[key] = run(config(N_traj, U, T, wc, lamb), write=False, with_steady=False)
        return cache[key]

    return get


def fmt_fit(rec):
    f = rec.fit
    if not f.accepted:
        return f"alpha=0 (no regime: {f.reason})"
    lo, hi = f.window
    return f"alpha={f.alpha:.3f} window=[{lo:.3g}, {hi:.3g}] ({math.log10(hi / lo):.2f} dec, r2={f.r2:.4f})"


def test_criterion_1_lindblad_steady_state(report):
    spec = SystemSpec(10, 1.0, 10.0)
    L = lindblad_liouvillian(spec, 0.1)
    n1 = L.spectrum.to_eigenbasis(number_operator(1, build_basis(10)))
    k = fluctuation(steady_state(L), n1) / 100
    ok = abs(k - 0.1) <= 1e-6
    report("1 Lindblad infinite-T steady state", ok, f"kappa/N^2 = {k:.12f} (target 0.1 +- 1e-6)")
    assert ok


def test_criterion_2_ground_state_scaling(report):
    Ns = np.array([10, 20, 40, 80])
    k = [fluctuation(ground_state(SystemSpec(int(N), 1.0, 10.0)), number_operator(1, build_basis(int(N)))) for N in Ns]
    slope = np.polyfit(np.log(Ns), np.log(k), 1)[0]
    local = np.diff(np.log(k)) / np.diff(np.log(Ns))
    ok = abs(slope - 0.5) <= 0.05
    report("2 ground-state fluctuation scaling", ok,
           f"slope = {slope:.4f} (target 0.5 +- 0.05); local slopes {np.round(local, 3).tolist()}")
    assert ok


def test_criterion_3_algebraic_regime(runs, report):
    rec = runs(10.0, 500.0, 500.0)
    f = rec.fit
    ok = f.accepted and math.log10(f.window[1] / f.window[0]) >= 1.5 - 1e-9 and 0.4 <= f.alpha <= 0.6
    report("3 high-T algebraic regime", ok, fmt_fit(rec) + " (need >= 1.5 dec, alpha in [0.4, 0.6])")
    lamb = runs(10.0, 500.0, 500.0, True)
    report("3 with Lamb shift", None, fmt_fit(lamb))
    assert ok


def test_criterion_4_monotone_in_T(runs, report):
    a = [runs(10.0, T, 500.0).fit.alpha for T in (10.0, 100.0, 1200.0)]
    ok = a[0] < a[1] < a[2]
    report("4 exponent-temperature monotonicity", ok, "alpha(T=10, 100, 1200) = " + ", ".join(f"{x:.3f}" for x in a))
    b = [runs(10.0, T, 500.0, True).fit.alpha for T in (10.0, 100.0, 1200.0)]
    report("4 with Lamb shift", None, "alpha(T=10, 100, 1200) = " + ", ".join(f"{x:.3f}" for x in b)
           + (" (monotone)" if b[0] < b[1] < b[2] else " (not monotone)"))
    assert ok


def test_criterion_5_cutoff_suppression(runs, report):
    small = runs(10.0, 1200.0, 10.0).fit.alpha
    large = runs(10.0, 1200.0, 1000.0).fit.alpha
    ok = small < large - 0.05
    report("5 cutoff suppression", ok, f"alpha(wc=10) = {small:.3f}, alpha(wc=1000) = {large:.3f} (need gap > 0.05)")
    s2 = runs(10.0, 1200.0, 10.0, True).fit.alpha
    l2 = runs(10.0, 1200.0, 1000.0, True).fit.alpha
    report("5 with Lamb shift", None, f"alpha(wc=10) = {s2:.3f}, alpha(wc=1000) = {l2:.3f}")
    assert ok


def collapse_pair(recs, mode):
    curves = []
    for r in recs:
        win = r.fit.window if r.fit.accepted else None
        curves.append(rescale_time(r.trajectory, mode, window=win))
    return collapse_metric(curves)


def test_criterion_6_collapse(runs, report):
    recs = [runs(U, 500.0, 500.0) for U in (5.0, 20.0)]
    m_tau, m_tt = collapse_pair(recs, "tau"), collapse_pair(recs, "tau_tilde")
    ok = m_tt < m_tau
    report("6 collapse improvement", ok, f"tau metric = {m_tau:.5f}, tau_tilde metric = {m_tt:.5f}; "
           + ", ".join(f"U={U:g}: {fmt_fit(r)}" for U, r in zip((5, 20), recs)))
    lamb = [runs(U, 500.0, 500.0, True) for U in (5.0, 20.0)]
    a, b = collapse_pair(lamb, "tau"), collapse_pair(lamb, "tau_tilde")
    report("6 with Lamb shift", None, f"tau metric = {a:.5f}, tau_tilde metric = {b:.5f}"
           + ("" if all(r.fit.accepted for r in lamb) else " (a curve has no regime; its full range is used)"))
    assert ok


def rk_states(L, rho0, times):
    sol = solve_ivp(lambda t, y: L.matrix @ y, (0.0, times[-1]), rho0.reshape(-1, order="F").astype(complex),
                    method="DOP853", t_eval=times, rtol=1e-12, atol=1e-14)
    assert sol.success
    return [sol.y[:, k].reshape(L.dim, L.dim, order="F") for k in range(len(times))]


_ORACLE_ERRS = []


@settings(max_examples=5, deadline=None)
@given(st.floats(2.0, 20.0), st.floats(5.0, 1000.0), st.floats(50.0, 1000.0))
def _squaring_vs_rk(U, T, wc):
    spec = SystemSpec(4, 1.0, U)
    L = build_redfield(spec, BathSpec(0.01, T, wc))
    rho0 = ground_state(spec).in_eigenbasis(L.spectrum)
    tr = evolve(rho0, L, geometric_grid(0.05, 50.0, 10 ** 0.25), store_states=True)
    ref = rk_states(L, rho0.entries, tr.times)
    err = max(np.abs(a - b).max() for a, b in zip(tr.states, ref))
    _ORACLE_ERRS.append(err)
    assert err <= 1e-8


def test_criterion_7_oracle_equivalence(report):
    # (a) squaring ladder against adaptive Runge-Kutta, N = 4, t in [0.05, 50]
    _ORACLE_ERRS.clear()
    ok_a = True
    try:
        _squaring_vs_rk()
    except AssertionError:
        ok_a = False
    # (b) analytic S(inf) real part against the time integral of S_tilde(-tau) C(tau) to infinity
    N = 6
    spec = SystemSpec(N, 1.0, 10.0)
    sp = diagonalize(build_hamiltonian(spec))
    bath = BathSpec(0.01, 500.0, 500.0)
    worst = 0.0
    for site in (1, 2):
        n = number_operator(site, build_basis(N))
        s = sp.to_eigenbasis(n).entries
        op = transition_operator_asymptotic(sp, n, bath)
        gains = {}
        for (i, j), sij in np.ndenumerate(s):
            if sij == 0:
                continue
            w = -sp.gaps[i, j]
            if w not in gains:
                gains[w] = time_domain_gain(w, math.inf, bath).real
            worst = max(worst, abs(op.matrix[i, j].real - sij * gains[w]))
    ok_b = worst <= 1e-6
    ok = ok_a and ok_b
    report("7 oracle equivalence", ok,
           f"ladder vs RK max entry error = {max(_ORACLE_ERRS):.2e} over {len(_ORACLE_ERRS)} cases (<= 1e-8); "
           f"S(inf) vs time-domain quadrature at N=6: {worst:.2e} (<= 1e-6)")
    assert ok


def test_criterion_8_physics_invariants(runs, report):
    # detailed balance over a grid of gaps and temperatures
    db = 0.0
    for T in (0.5, 5.0, 50.0, 500.0, 1200.0):
        for wc in (10.0, 500.0):
            b = BathSpec(0.01, T, wc)
            d = np.logspace(-3, math.log10(min(30 * T, 700.0)), 40)
            db = max(db, float(np.max(np.abs(rate_W(d, b) / rate_W(-d, b) / np.exp(-d / T) - 1))))
    b = BathSpec(0.01, 500.0, 500.0)
    cont = max(abs(rate_W(e, b) - 5.0) / 5.0 for e in (1e-6, -1e-6))
    rec = runs(10.0, 500.0, 500.0)
    tr = rec.trajectory
    # trace bound per application, taken from a direct evolve with application counts
    L = build_redfield(SystemSpec(rec.config["system"]["N"], 1.0, 10.0), b)
    raw = evolve(ground_state(L.spec), L, geometric_grid(GRID["t_min"], GRID["t_max"], GRID["ratio"]))
    per_app = float(np.max(raw.trace_dev / raw.applications))
    eps = float(np.max(tr.eps))
    spec = SystemSpec(8, 1.0, 10.0)
    Lg = build_redfield(spec, BathSpec(1e-3, 5.0, 500.0))
    rho = steady_state(Lg).entries
    e = Lg.spectrum.energies
    w = np.exp(-(e - e[0]) / 5.0)
    dist = 0.5 * float(np.abs(np.linalg.eigvalsh(rho - np.diag(w / w.sum()))).sum())
    checks = {"detailed balance": db <= 1e-12, "continuity": cont <= 1e-8, "trace/application": per_app <= 1e-9,
              "negativity": eps < 1e-6, "Gibbs": dist <= 5e-2}
    ok = all(checks.values())
    report("8 physics invariants", ok,
           f"detailed balance {db:.1e} (<= 1e-12); continuity {cont:.1e}; trace dev per application {per_app:.1e} "
           f"(<= 1e-9); max eps {eps:.2e} (< 1e-6); Gibbs trace distance {dist:.2e} (<= 5e-2)"
           + ("" if ok else f"; failed: {[k for k, v in checks.items() if not v]}"))
    assert ok


def test_criterion_9_high_T_limit(report):
    spec = SystemSpec(8, 1.0, 10.0)
    bath = BathSpec(0.01, 1e4, 1e4)
    gT = bath.gamma * bath.T
    Lr = build_redfield(spec, bath)
    Ll = lindblad_liouvillian(spec, gT, spectrum=Lr.spectrum)
    n1 = Lr.spectrum.to_eigenbasis(number_operator(1, build_basis(8)))
    obs = {"k": fluctuation_observable(n1)}
    grid = geometric_grid(1e-4, 10 / gT, 10 ** 0.05)
    rho0 = ground_state(spec)
    kr = evolve(rho0, Lr, grid, observables=obs).observables["k"]
    kl = evolve(rho0, Ll, grid, observables=obs).observables["k"]
    dev = float(np.max(np.abs(kr / kl - 1)))
    ok = dev <= 0.02
    report("9 high-T limit correspondence", ok, f"max relative kappa deviation {dev:.2e} over t in [1e-4, {10 / gT:g}] (<= 2%)")
    assert ok
