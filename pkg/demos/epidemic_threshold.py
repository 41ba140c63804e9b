"""Where the mean-field model switches from dying out to persisting.

For each network the effective infection rate tau = beta/delta is compared
with the critical value tau_c = (gamma + sigma) / (gamma * lambda1).  Below
it the mean-field infection fraction decays to zero; above it the system
settles on an endemic state that the fixed-point solver finds directly.

Run with ``python3 demos/epidemic_threshold.py``.
"""
from __future__ import annotations

import numpy as np

from sirsnet import meanfield as mf
from sirsnet.graph_core import circulant_regular_graph, complete_graph, spectral_radius
from sirsnet.params import EpidemicParams

graphs = {"complete, N=50": complete_graph(50), "10-regular ring, N=50": circulant_regular_graph(50, 10)}
settings = [EpidemicParams(0.1, 0.9, 0.1, 0.4), EpidemicParams(0.1, 0.4, 0.2, 0.45),
            EpidemicParams(0.01, 0.4, 0.2, 0.45), EpidemicParams(1.0, 0.4, 0.06, 0.45)]
t = np.linspace(0.0, 500.0, 501)

for name, g in graphs.items():
    lam = spectral_radius(g).lambda1
    print(f"{name}: lambda1 = {lam:.3f}")
    for p in settings:
        rep = mf.threshold_report(p, lam)
        traj = mf.integrate("full", mf.MeanFieldState.one_infected(50), t, p, g)
        line = (f"  beta={p.beta:<5} delta={p.delta:<4} gamma={p.gamma:<5} sigma={p.sigma:<5}"
                f" tau={rep.tau:.4f} tau_c={rep.tau_c:.4f} -> {rep.regime:<10}"
                f" mean I at t=500: {traj.prevalence()[-1]:.2e}")
        if rep.regime == "endemic":
            line += f", fixed point mean I*: {mf.endemic_equilibrium(g, p).mean_infected():.5f}"
        print(line)
