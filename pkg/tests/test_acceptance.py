"""Acceptance suite: one test per criterion, each at its stated tolerance.

Monte Carlo checks use a single fixed seed. Run with ``-s`` or read the
terminal summary for the one-line verdict of each criterion.
"""

import time

import numpy as np
import pytest

from profitlag import analytic as A
from profitlag import markov as M
from profitlag import report, sim
from profitlag.domain import DAY, MinerParams, ProtocolParams, Strategy

SEED = 2024
PROTO = ProtocolParams()
P = MinerParams(0.1, 0.9)
POINTS = [(0.1, 0.9), (0.2, 0.5), (0.3, 0.0), (0.35, 0.7), (0.45, 1.0)]
RESULTS = {}


def record(key, checks):
    """checks: list of (label, ok, detail). Stores and prints one line, returns overall verdict."""
    ok = all(c[1] for c in checks)
    detail = "; ".join(f"{label} {'ok' if good else 'FAILED'} ({info})" for label, good, info in checks)
    RESULTS[key] = (ok, detail)
    print(f"{'PASS' if ok else 'FAIL'}  criterion {key}: {detail}")
    return ok


def within3(est, expected):
    z = est.z(expected)
    return abs(z) < 3, f"z={z:+.2f}"


def test_criterion_1_sm_lag_example():
    t0 = time.perf_counter()
    k = A.sm_lag_multiple(P)
    lag = A.sm_profit_lag(P)
    elapsed = time.perf_counter() - t0
    checks = [
        ("lag multiple", abs(k - 4.0) <= 1e-9, f"{k:.12f}"),
        ("profit lag weeks", abs(lag.weeks - 10.1839) <= 1e-3, f"{lag.weeks:.6f}"),
        ("runtime", elapsed < 0.1, f"{elapsed * 1e3:.2f} ms"),
    ]
    assert record("1 SM lag at (0.1, 0.9)", checks)


def test_criterion_2_first_period_duration():
    exact = A.sm_first_period_duration(MinerParams(0.1, 0.9))
    out = sim.run(sim.SimConfig(MinerParams(0.1, 0.9), PROTO, "sm", n_periods=1, n_runs=10_000, seed=SEED,
                                record_delta=False))
    ok, info = within3(out.first_period_duration_hat, exact)
    checks = [
        ("analytic days", abs(exact / DAY - 15.2872) <= 1e-3, f"{exact / DAY:.5f}"),
        ("simulated 1e4 runs", ok, f"{out.first_period_duration_hat.value / DAY:.4f} d, {info}"),
    ]
    assert record("2 SM first period duration", checks)


def test_criterion_3_ism_threshold():
    r = A.threshold((Strategy.ISM, Strategy.HM), 0.0)
    s = sim.simulated_threshold("ism", 0.0, 0.30, 0.42, n_runs=2000, seed=SEED, tol=0.005)
    mid = 0.5 * (s.lo + s.hi)
    checks = [
        ("bisection root", abs(r.q_star - 0.365078) <= 1e-4, f"q*={r.q_star:.6f}"),
        ("simulated bracket", abs(mid - 0.365) <= 0.01 and s.hi - s.lo <= 0.01,
         f"[{s.lo:.4f}, {s.hi:.4f}]"),
    ]
    assert record("3 ISM/HM threshold at gamma=0", checks)


def test_criterion_4_markov_equivalence():
    worst = {"E[nu]": 0.0, "pi0": 0.0, "q'": 0.0, "E[delta]": 0.0}
    for q in np.round(np.arange(0.05, 0.451, 0.05), 2):
        for g in (0.0, 0.25, 0.5, 0.75, 1.0):
            e = M.equivalence(MinerParams(float(q), g))
            worst["E[nu]"] = max(worst["E[nu]"], e.return_time)
            worst["pi0"] = max(worst["pi0"], e.pi0)
            worst["q'"] = max(worst["q'"], e.apparent_hashrate)
            worst["E[delta]"] = max(worst["E[delta]"], e.drift)
    checks = [(k, v <= 1e-10, f"max err {v:.1e}") for k, v in worst.items()]
    assert record("4 Markov vs closed form", checks)


def _sim(strategy, params, periods=2):
    return sim.run(sim.SimConfig(params, PROTO, strategy, n_periods=periods, n_runs=10_000, seed=SEED,
                                 record_delta=False))


def test_criterion_5_monte_carlo_agreement():
    checks = []
    for q, g in POINTS:
        p = MinerParams(q, g)
        st = A.sm_cycle_stats(p)
        cyc = sim.simulate_sm_cycles(p, PROTO, n_cycles=10_000, seed=SEED)
        for label, name, expected in (("E[T]", "duration", st.expected_duration),
                                      ("E[R]", "revenue", st.expected_revenue),
                                      ("E[L]", "official", st.expected_progress)):
            ok, info = within3(cyc.mean(name), expected)
            checks.append((f"{label}@{q},{g}", ok, info))
        ok, info = within3(_sim("sm", p).apparent_hashrate_hat, A.sm_apparent_hashrate(p))
        checks.append((f"q'@{q},{g}", ok, info))
        ok, info = within3(_sim("ism", p).apparent_hashrate_hat, A.ism_apparent_hashrate(p))
        checks.append((f"q''@{q},{g}", ok, info))
        ok, info = within3(_sim("anm", p).extras["anm_factor"], A.anm_factor(p))
        checks.append((f"ANM@{q}", ok, info))
    cfg = sim.SimConfig(MinerParams(0.3, 0.5), PROTO, "ism", n_periods=4, n_runs=200, seed=SEED)
    a = report.dumps(report.simulate_report(sim.run(cfg), cfg))
    b = report.dumps(report.simulate_report(sim.run(cfg), cfg))
    checks.append(("determinism", a == b, "byte-identical JSON"))
    assert record("5 Monte Carlo vs analytic", checks)


def test_criterion_6_profit_lags():
    ism = A.ism_profit_lag(P)
    sm_lag = A.sm_profit_lag(P)
    anm = A.anm_profit_lag(MinerParams(0.1))
    out = sim.run(sim.SimConfig(P, PROTO, "ism", n_periods=18, n_runs=10_000, seed=SEED))
    emp = out.profit_lag_hat.mean_path
    anm_sim = sim.run(sim.SimConfig(MinerParams(0.1), PROTO, "anm", n_periods=4, n_runs=2000, seed=SEED))
    anm_emp = anm_sim.profit_lag_hat.mean_path
    checks = [
        ("ISM expected trajectory", 13 <= ism.periods <= 15, f"{ism.periods:.3f} periods"),
        ("ISM simulated mean path", 13 <= emp.periods <= 15, f"{emp.periods:.3f} periods, 1e4 runs"),
        ("SM", abs(sm_lag.periods - 5) <= 0.1, f"{sm_lag.periods:.3f} periods"),
        ("ANM expected", anm.periods <= 1.0, f"{anm.periods:.3f} periods"),
        ("ANM simulated mean path", anm_emp.periods <= 1.0 + 1e-9, f"{anm_emp.periods:.3f} periods"),
    ]
    assert record("6 profit lags", checks)


def test_criterion_7_anm_exactness():
    checks = []
    worst = 0.0
    for q in (0.05, 0.1, 0.25, 0.4, 0.49):
        tr = A.anm_delta_trajectory(MinerParams(q), PROTO, 6)
        for n in range(1, 7):
            exact = q * q * n * PROTO.n0 * PROTO.b
            worst = max(worst, abs(tr.at_height(2 * n * PROTO.n0) - exact) / exact)
    checks.append(("analytic", worst <= 1e-12, f"max rel err {worst:.1e}"))
    q = 0.1
    out = sim.run(sim.SimConfig(MinerParams(q), PROTO, "anm", n_periods=6, n_runs=10_000, seed=SEED))
    for n, est in enumerate(out.extras["delta_after_cycles"], start=1):
        ok, info = within3(est, q * q * n * PROTO.n0 * PROTO.b)
        checks.append((f"simulated n={n}", ok, f"{est.value:.3f} b, {info}"))
    assert record("7 ANM delta per cycle", checks)


def test_criterion_8_properties():
    q = np.linspace(0.005, 0.495, 50)
    g = np.linspace(0.0, 1.0, 50)
    G, Q = np.meshgrid(g, q, indexing="ij")
    ident = np.max(np.abs(A._q_second(Q, G) - A._q_second_poly(Q, G)))
    d = A._drift(q)
    qp, qpp = A._q_prime(Q, G), A._q_second(Q, G)
    violations = int(np.sum((qpp > Q) & ~(qp > qpp)))
    el = np.max(np.abs(A._drift(Q) - A._cycle_time(Q) / A._cycle_progress(Q)))
    checks = [
        ("q'' identity", ident <= 1e-12, f"max diff {ident:.1e}"),
        ("E[delta] >= 1 and increasing", bool(np.all(d >= 1) and np.all(np.diff(d) > 0)), f"min {d.min():.6f}"),
        ("q''>q implies q'>q''", violations == 0, f"{violations} violations of {Q.size}"),
        ("E[delta] = E[T]/(E[L] tau0)", el <= 1e-12, f"max diff {el:.1e}"),
    ]
    assert record("8 property suites", checks)
