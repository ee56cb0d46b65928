"""Stationary state of the diffusion-dominated model and what characterizes it.

Run:  python demos/01_steady_state.py
"""

import numpy as np

from rieszflow import (ModelParams, RadialGrid, SolverConfig, build_operator, free_energy,
                       solve_el, stretch)
from rieszflow.energy import dilation_profile

params = ModelParams(N=1, s=0.4, p=2.0, m=3.0, chi=1.0, M=1.0)
grid = RadialGrid(1, n=1024, R_dom=4.0)

# The nonlocal term needs K_{s/2}; the operator is assembled once per grid.
op = build_operator(grid, params.s / 2)
rep = solve_el(params, SolverConfig(), op)

print(f"label            {rep.label}")
print(f"iterations       {rep.iterations}")
print(f"EL residual      {rep.el_residual:.2e}")
print(f"multiplier D     {rep.multiplier:.6f}")
print(f"support radius   {rep.support_radius:.4f}")
print(f"free energy      {rep.energy.free_energy:.6f}")

# A minimizer cannot be improved by dilation: the optimal factor is 1 and the
# energy of nearby dilations, computed exactly on stretched grids, is higher.
print(f"lambda_*         {rep.energy.lambda_star:.6f}")
for lam in (0.9, 1.0, 1.1):
    F = free_energy(params, op.rescaled(1 / lam), stretch(rep.rho, lam)).free_energy
    law = dilation_profile(params, rep.energy.norm_m_m, rep.energy.interaction * params.p_conj, lam)
    print(f"  F(rho^{lam:<4}) = {F:.8f}   scaling law {float(law):.8f}")

inside = rep.rho.values > 0
print(f"profile is radially nonincreasing: {rep.monotone}; "
      f"cells in support: {int(np.count_nonzero(inside))}")
