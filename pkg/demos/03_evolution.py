"""Gradient-flow dynamics: relaxation, conservation and concentration.

Run:  python demos/03_evolution.py
"""

import numpy as np

from rieszflow import (EvolveConfig, ModelParams, RadialDensity, RadialGrid, build_operator,
                       make_profile, run, solve_el)

grid = RadialGrid(1, n=256, R_dom=4.0)
op = build_operator(grid, 0.2)

# 1. A perturbed stationary state flows back to it.
params = ModelParams(N=1, s=0.4, p=2.0, m=3.0)
steady = solve_el(params, None, op).rho
rng = np.random.Generator(np.random.Philox(7))
v = steady.values * (1 + 0.05 * rng.uniform(-1, 1, grid.n))
start = RadialDensity(grid, v).scaled(1 / float(np.dot(v, grid.vol)))
rec = run(params, op, start, EvolveConfig(t_end=50.0, steady_tol=1e-4), reference=steady)
print(f"relaxation: {rec.status} at t = {rec.times[-1]:.3f} after {rec.steps} steps")
print(f"  L1 distance {rec.dist_ref[0]:.2e} -> {rec.dist_ref[-1]:.2e}")
print(f"  mass drift {rec.mass_drift:.1e}, energy increases {rec.energy_increases}")

# 2. Above the critical mass at m = m_c the density collapses to the origin.
Mc = 7.4197  # from demos/02_hls_and_critical_mass.py
for factor in (0.5, 1.5):
    p = ModelParams(N=1, s=0.4, p=2.0, m=1.2, M=factor * Mc)
    r = run(p, op, make_profile(grid, "indicator", mass=p.M, radius=0.3),
            EvolveConfig(t_end=0.5, record_every=500))
    print(f"M = {factor} M_c: {r.status}, sup norm {r.sup_norms[0]:.3g} -> {r.sup_norms[-1]:.3g}")
