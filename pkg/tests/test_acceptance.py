"""Acceptance criteria 1-10.

Every test prints exactly one ``ACCEPTANCE <k> PASS|FAIL`` line (visible in
``pytest -v`` output) and then asserts the criterion at its stated tolerance.
Criterion 9 covers four qualitative figure checks in one line.
"""
from __future__ import annotations

import time

import numpy as np
import pytest

from sirsnet import exact_markov as em
from sirsnet import meanfield as mf
from sirsnet.experiments import ExperimentConfig, reproduce, run
from sirsnet.graph_core import build_graph, circulant_regular_graph, complete_graph, graph_from_edges, spectral_radius
from sirsnet.io import read_csv
from sirsnet.params import EpidemicParams
from sirsnet.partitions import coarsest_equitable_partition, quotient_matrix
from sirsnet.stochastic_sim import estimate_prevalence, initial_states

P3 = build_graph("path", n=3)
RING5 = build_graph("ring", n=5)
K50 = complete_graph(50)
R50 = circulant_regular_graph(50, 10)
R50_4 = circulant_regular_graph(50, 4)
SETS_1 = (EpidemicParams(0.1, 0.4, 0.2, 0.0), EpidemicParams(0.25, 0.4, 0.2, 0.45))
FIG4 = {"4a": EpidemicParams(0.1, 0.9, 0.1, 0.4), "4b": EpidemicParams(1.0, 0.45, 0.2, 0.4),
        "4c": EpidemicParams(1.0, 0.45, 0.06, 0.4)}
FIG5 = {"5a": EpidemicParams(0.1, 0.4, 0.2, 0.45), "5b": EpidemicParams(1.0, 0.4, 0.2, 0.45),
        "5c": EpidemicParams(1.0, 0.4, 0.06, 0.45)}
EQPART = EpidemicParams(0.25, 0.4, 0.2, 0.3)


@pytest.fixture
def report(capsys):
    def emit(k: int, ok: bool, text: str) -> None:
        with capsys.disabled():
            print(f"\nACCEPTANCE {k} {'PASS' if ok else 'FAIL'}: {text}", flush=True)
    return emit


def _master(g, p, x0, t):
    Q = em.build_generator(g, p)
    v0 = np.zeros(Q.n_states)
    v0[em.encode(x0)] = 1.0
    return Q, em.solve_master_equation(Q, v0, t)


def test_criterion_1_mc_matches_master_equation(report):
    t = np.array([0.5, 1.0, 2.0, 5.0, 10.0])
    worst, slowest, details = 0.0, 0.0, []
    for name, g in (("P3", P3), ("ring5", RING5)):
        for k, p in enumerate(SETS_1):
            x0 = initial_states(g.n)
            _, V = _master(g, p, x0, t)
            exact = em.marginal_infection_probabilities(V, g.n).mean(axis=1)
            start = time.perf_counter()
            curve = estimate_prevalence(g, p, x0, 100_000, t, base_seed=1000 + k)
            slowest = max(slowest, time.perf_counter() - start)
            z = np.abs(curve.mean - exact) / curve.stderr
            worst = max(worst, float(z.max()))
            details.append(f"{name}/set{k + 1} max|z|={z.max():.2f}")
    ok = worst <= 3.0 and slowest < 120.0
    report(1, ok, f"MC (1e5 paths) vs master equation, {'; '.join(details)}; slowest case {slowest:.1f}s")
    assert ok


def test_criterion_2_hitting_time_identity(report):
    rel = []
    for p in SETS_1:
        Q = em.build_generator(P3, p)
        h = em.expected_hitting_time_final_set(Q, [1, 0, 0])
        t = np.linspace(0.0, 200.0, 20001)
        _, V = _master(P3, p, [1, 0, 0], t)
        surv = em.prob_not_in_final_set(Q, V)
        integral = float(np.trapezoid(surv, t))
        assert surv[-1] < 1e-10
        rel.append(abs(h - integral) / h)
    ok = max(rel) <= 0.01
    report(2, ok, f"E[tau_FS] vs integral of P(tau_FS > t) on P3, relative gaps {', '.join(f'{r:.1e}' for r in rel)}")
    assert ok


def test_criterion_3_bound_dominance(report):
    graphs = {
        "edge": graph_from_edges(2, [(0, 1)]),
        "P3": P3,
        "star4": graph_from_edges(4, [(0, 1), (0, 2), (0, 3)]),
        "K4": complete_graph(4),
        "P5": build_graph("path", n=5),
        "ring5": RING5,
        "K5": complete_graph(5),
    }
    params = (EpidemicParams(0.1, 0.4, 0.2), EpidemicParams(0.25, 0.4, 0.2), EpidemicParams(0.05, 0.9, 0.1),
              EpidemicParams(0.02, 0.5, 1.0))
    t = np.linspace(0.0, 40.0, 161)
    violations, checks, mean_checks = 0, 0, 0
    for g in graphs.values():
        lam = spectral_radius(g).lambda1
        for p in params:
            for x0 in (initial_states(g.n), np.ones(g.n, dtype=np.int8)):
                Q, V = _master(g, p, x0, t)
                n_inf = int(np.sum(x0 == em.I))
                bound = em.bound_not_in_final_set(t, g.n, n_inf, p.beta, p.delta, lam)
                violations += int(np.sum(em.prob_not_in_final_set(Q, V) > bound))
                checks += t.size
                if p.beta / p.delta < 1 / lam:
                    mean_checks += 1
                    exact = em.expected_hitting_time_final_set(Q, x0)
                    violations += int(exact > em.bound_mean_extinction_time(g.n, p.beta, p.delta, lam))
    # with vaccination the dominance is unproven: counted for information only
    vacc_violations = 0
    for g in graphs.values():
        lam = spectral_radius(g).lambda1
        for p in params:
            pv = EpidemicParams(p.beta, p.delta, p.gamma, 0.3)
            x0 = np.ones(g.n, dtype=np.int8)
            Q, V = _master(g, pv, x0, t)
            bound = em.bound_not_in_final_set(t, g.n, g.n, pv.beta, pv.delta, lam)
            vacc_violations += int(np.sum(em.prob_not_in_final_set(Q, V) > bound))
    ok = violations == 0 and mean_checks > 0
    report(3, ok, f"{checks} final-set bound checks and {mean_checks} mean-extinction checks on "
                  f"{len(graphs)} graphs (N<=5, sigma=0), violations={violations}; "
                  f"sigma=0.3 final-set violations (not asserted)={vacc_violations}")
    assert ok


def test_criterion_4_threshold_dichotomy(report):
    t = np.linspace(0.0, 500.0, 1001)
    results, failures = [], []
    for gname, g, lam in (("K50", K50, 49.0), ("R10", R50, 10.0)):
        for name, p in {**FIG4, **FIG5}.items():
            regime = mf.threshold_report(p, lam).regime
            traj = mf.integrate("full", mf.MeanFieldState.one_infected(50), t, p, g)
            if regime == "extinction":
                err = float(traj.I[-1].max())
            else:
                eq = mf.endemic_equilibrium(g, p)
                err = float(np.max(np.abs(traj.final - eq.state.as_vector())))
            results.append(f"{gname}/{name}:{regime[:3]}={err:.0e}")
            if err > 1e-6:
                failures.append(f"{gname}/{name}")
    ok = not failures
    report(4, ok, "mean-field at t=500 (extinction: max I; endemic: distance to fixed point) "
                  + ", ".join(results) + (f"; failed {failures}" if failures else ""))
    assert ok


def test_criterion_5_quotient_equivalence(report):
    part = coarsest_equitable_partition(R50)
    t = np.linspace(0.0, 100.0, 1001)
    worst_traj, worst_eq = 0.0, 0.0
    for p in (EQPART, FIG5["5b"], FIG5["5c"]):
        qm = quotient_matrix(part, p.beta, p.epsilon)
        for i0, r0 in ((0.1, 0.0), (0.6, 0.3), (0.01, 0.9)):
            full = mf.integrate("full", mf.MeanFieldState.from_IR(np.full(50, i0), np.full(50, r0)), t, p, R50)
            quot = mf.integrate("quotient", mf.MeanFieldState.from_IR([i0], [r0]), t, p, qm)
            for a, b in ((full.S, quot.S), (full.I, quot.I), (full.R, quot.R)):
                worst_traj = max(worst_traj, float(np.max(np.abs(a - part.expand(b.T).T))))
        e_full = mf.endemic_equilibrium(R50, p)
        e_quot = mf.endemic_equilibrium(qm, p)
        for a, b in ((e_full.S, e_quot.S), (e_full.I, e_quot.I), (e_full.R, e_quot.R)):
            worst_eq = max(worst_eq, float(np.max(np.abs(a - part.expand(b)))))
    ok = worst_traj <= 1e-7 and worst_eq <= 1e-7
    report(5, ok, f"10-regular N=50, full vs quotient: max trajectory deviation {worst_traj:.1e}, "
                  f"equilibrium deviation {worst_eq:.1e}")
    assert ok


def test_criterion_6_regular_closed_form(report):
    worst_s, worst_r = 0.0, 0.0
    for g, d in ((R50, 10), (R50_4, 4)):
        for p in (EpidemicParams(1.0, 0.4, 0.2, 0.45), EpidemicParams(0.5, 0.4, 0.2, 0.3),
                  EpidemicParams(0.5, 0.3, 0.1, 0.05)):
            eq = mf.endemic_equilibrium(g, p)
            worst_s = max(worst_s, float(np.max(np.abs(eq.S - p.delta / (p.beta * d)))))
    het = graph_from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 2), (1, 4)])
    for g in (R50, R50_4, het):
        for p in (EpidemicParams(0.5, 0.4, 0.2, 0.0), EpidemicParams(1.0, 0.3, 0.06, 0.0)):
            eq = mf.endemic_equilibrium(g, p)
            worst_r = max(worst_r, float(np.max(np.abs(eq.R - p.delta / p.gamma * eq.I))))
    ok = worst_s <= 1e-9 and worst_r <= 1e-9
    report(6, ok, f"max|S* - delta/(beta d)| = {worst_s:.1e}; sigma=0 max|R* - (delta/gamma) I*| = {worst_r:.1e}")
    assert ok


def test_criterion_7_lyapunov(report):
    p, d = EQPART, 10
    eq = mf.endemic_equilibrium(R50, p)
    t = np.linspace(0.0, 200.0, 2001)
    max_rise, worst_dv = -np.inf, 0.0
    h = 1e-4
    for i0, r0 in ((0.02, 0.0), (0.5, 0.3), (0.9, 0.05), (0.05, 0.9), (0.2, 0.0)):
        traj = mf.integrate("regular2d", [i0, r0], t, p, d, tol=1e-12)
        V = mf.lyapunov_V(traj.I[:, 0], traj.R[:, 0], eq, p, d)
        max_rise = max(max_rise, float(np.max(np.diff(V))))
        for k in (0, 50, 200, 700):
            y = traj.y[k]
            fwd = mf.integrate("regular2d", y, [0.0, h], p, d, tol=1e-13).final
            bwd = mf.integrate("regular2d", y, [0.0, -h], p, d, tol=1e-13).final
            fd = (mf.lyapunov_V(fwd[0], fwd[1], eq, p, d) - mf.lyapunov_V(bwd[0], bwd[1], eq, p, d)) / (2 * h)
            worst_dv = max(worst_dv, abs(fd - mf.lyapunov_dVdt(y[0], y[1], eq, p)))
    ok = max_rise <= mf.LYAPUNOV_ROUNDOFF and worst_dv <= 1e-6
    report(7, ok, f"largest V increment between outputs {max_rise:.1e} (rounding floor "
                  f"{mf.LYAPUNOV_ROUNDOFF:.0e}); max |dV/dt - closed form| {worst_dv:.1e}")
    assert ok


def test_criterion_8_condition_a_refuted(report):
    holds, checked = 0, 0
    for g, lam in ((R50, 10.0), (R50_4, 4.0)):
        for beta in (0.5, 1.0, 2.0):
            for sigma in (0.0, 0.15, 0.3):
                p = EpidemicParams(beta, 0.4, 0.2, sigma)
                assert mf.threshold_report(p, lam).regime == "endemic"
                rep = mf.check_global_condition_a(mf.endemic_equilibrium(g, p), p, lam)
                assert rep.branch == "a"
                holds += int(rep.holds)
                checked += 1
    ok = holds == 0 and checked == 18
    report(8, ok, f"condition a) evaluated on 10- and 4-regular graphs over 3x3 (beta, sigma): "
                  f"{holds}/{checked} cases hold")
    assert ok


def test_criterion_9_figure_shapes(report, tmp_path):
    parts = {}
    # fig2: steady Monte Carlo prevalence decreasing in sigma
    reproduce("fig2", tmp_path / "fig2")
    _, steady, _ = read_csv(tmp_path / "fig2" / "steady_seed0.csv")
    parts["fig2"] = (bool(np.all(np.diff(steady[:, 1]) < 0)),
                     "steady " + "/".join(f"{v:.3f}" for v in steady[:, 1]))
    # fig3: I* increasing in gamma, decreasing in sigma
    reproduce("fig3", tmp_path / "fig3")
    _, grid, _ = read_csv(tmp_path / "fig3" / "fig3_equilibrium_grid.csv")
    table = grid[:, 1:]
    parts["fig3"] = (bool(np.all(np.diff(table, axis=0) > 0) and np.all(np.diff(table, axis=1) < 0)),
                     f"{table.shape[0]}x{table.shape[1]} grid")
    # fig4c / fig5c: Monte Carlo dies out, mean-field persists above 0.1
    for fig in ("fig4c", "fig5c"):
        reproduce(fig, tmp_path / fig)
        _, cmp_, _ = read_csv(tmp_path / fig / "comparison_seed0.csv")
        mfp, mc = cmp_[:, 1], cmp_[:, 2]
        after_peak = mfp[int(np.argmax(mfp)):]
        ok_mc, ok_mf = bool(mc[-1] < 0.05), bool(after_peak.min() > 0.1)
        parts[fig] = (ok_mc and ok_mf, f"MC end {mc[-1]:.4f}, mean-field min after peak {after_peak.min():.4f}")
    ok = all(v[0] for v in parts.values())
    text = "; ".join(f"{k} {'ok' if v[0] else 'FAILS'} ({v[1]})" for k, v in parts.items())
    report(9, ok, text)
    assert ok, text


def test_criterion_10_determinism(report, tmp_path):
    cfgs = [
        ExperimentConfig.from_dict(dict(graph={"kind": "complete", "n": 50}, params=FIG4["4b"].as_dict(),
                                        method="simulate", t_max=20.0, grid=40, paths=500, base_seed=12345,
                                        sweep={"gamma": [0.06, 0.2]})),
        ExperimentConfig.from_dict(dict(graph={"kind": "ring", "n": 5}, params=SETS_1[1].as_dict(), method="exact",
                                        t_max=10.0, grid=20)),
        ExperimentConfig.from_dict(dict(graph={"kind": "circulant_regular", "n": 50, "degree": 10},
                                        params=EQPART.as_dict(), method="meanfield", t_max=50.0)),
    ]
    mismatches, n_files = [], 0
    for k, cfg in enumerate(cfgs):
        a = run(cfg, tmp_path / f"a{k}")
        b = run(cfg, tmp_path / f"b{k}")
        n_files += len(a.files)
        mismatches += [f for f in a.files if a.files[f] != b.files.get(f)]
    ok = not mismatches
    report(10, ok, f"{n_files} output files over {len(cfgs)} configs re-run with identical SHA-256"
                   + (f"; mismatches {mismatches}" if mismatches else ""))
    assert ok
