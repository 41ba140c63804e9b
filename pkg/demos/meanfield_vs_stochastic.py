"""Where the deterministic approximation and the random process part ways.

On the complete graph with fifty nodes, slow loss of immunity and steady
vaccination, the mean-field model predicts a persistent endemic level.  In
the random process most susceptible nodes are immune or vaccinated after the
first wave, so small pockets of infection can die out before immunity
wanes.  Once every node is free of infection it stays that way.  The script
prints both curves side by side every ten time units.

Run with ``python3 demos/meanfield_vs_stochastic.py`` (a few seconds).
"""
from __future__ import annotations

import numpy as np

from sirsnet import meanfield as mf
from sirsnet.graph_core import complete_graph
from sirsnet.params import EpidemicParams
from sirsnet.stochastic_sim import empirical_extinction_stats, initial_states, simulate_ensemble

g = complete_graph(50)
p = EpidemicParams(beta=1.0, delta=0.45, gamma=0.06, sigma=0.4)
t = np.linspace(0.0, 100.0, 201)

det = mf.integrate("full", mf.MeanFieldState.one_infected(50), t, p, g).prevalence()
ens = simulate_ensemble(g, p, initial_states(50), 5_000, t, base_seed=0)
stats = empirical_extinction_stats(ens, t_max=100.0)

print(f"{'t':>6} {'mean-field':>11} {'simulated':>10} {'stderr':>8}")
for k in range(0, t.size, 20):
    print(f"{t[k]:6.1f} {det[k]:11.4f} {ens.curve.mean[k]:10.4f} {ens.curve.stderr[k]:8.4f}")
print()
print(f"paths with no infected node left by t=100: {1 - stats.fraction_censored:.1%}")
print(f"mean-field endemic level: {mf.endemic_equilibrium(g, p).mean_infected():.4f}")
