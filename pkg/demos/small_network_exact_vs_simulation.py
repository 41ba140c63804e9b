"""Exact Markov chain against Gillespie simulation on a three-node path.

A single infected node sits at one end of the path 1 - 2 - 3.  The exact
master equation over all 27 joint states gives the expected prevalence at a
few times.  Twenty thousand simulated paths estimate the same curve, and
the two should agree to within a few standard errors.  The expected time
until no node is infected comes from a linear solve on the chain, and an
upper bound that only needs the spectral radius sits next to it.

Run with ``python3 demos/small_network_exact_vs_simulation.py``.
"""
from __future__ import annotations

import numpy as np

from sirsnet import exact_markov as em
from sirsnet.graph_core import build_graph, spectral_radius
from sirsnet.params import EpidemicParams
from sirsnet.stochastic_sim import empirical_extinction_stats, estimate_prevalence, initial_states, simulate_ensemble

g = build_graph("path", n=3)
p = EpidemicParams(beta=0.1, delta=0.4, gamma=0.2, sigma=0.0)
x0 = initial_states(3)
t = np.array([0.5, 1.0, 2.0, 5.0, 10.0])

Q = em.build_generator(g, p)
v0 = np.zeros(Q.n_states)
v0[em.encode(x0)] = 1.0
exact = em.marginal_infection_probabilities(em.solve_master_equation(Q, v0, t), 3).mean(axis=1)
mc = estimate_prevalence(g, p, x0, 20_000, t, base_seed=7)

print("Expected fraction infected on the path, first node infected at t = 0")
print(f"{'t':>6} {'exact':>10} {'simulated':>10} {'z-score':>8}")
for ti, e, m, s in zip(t, exact, mc.mean, mc.stderr):
    print(f"{ti:6.1f} {e:10.5f} {m:10.5f} {(m - e) / s:8.2f}")

lam = spectral_radius(g).lambda1
h = em.expected_hitting_time_final_set(Q, x0)
ens = simulate_ensemble(g, p, x0, 20_000, [0.0, 500.0], base_seed=8)
stats = empirical_extinction_stats(ens)
print()
print(f"spectral radius lambda1 = {lam:.4f}, beta/delta = {p.beta / p.delta:.3f} < 1/lambda1 = {1 / lam:.3f}")
print(f"expected time until nobody is infected: exact {h:.4f}, simulated {stats.mean:.4f}")
print(f"upper bound from the spectral radius:   {em.bound_mean_extinction_time(3, p.beta, p.delta, lam):.4f}")
