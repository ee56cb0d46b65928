"""As s -> 0 the nonlocal interaction becomes local and minimizers approach
an indicator function whose height balances diffusion against aggregation.

Run:  python demos/04_small_s_limit.py   (about half a minute)
"""

from rieszflow import ModelParams, RadialGrid, fair_limit_study, make_profile, sweep_s
from rieszflow.riesz import kurokawa_error

s_list = [0.4, 0.2, 0.1, 0.05]

params = ModelParams(N=1, s=0.4, p=2.0, m=3.0, chi=2.0, M=2.0)
rep = sweep_s(params, s_list, None, RadialGrid(1, n=2048, R_dom=2.0))
lim = rep.limit
print(f"limit profile: height {lim['height']:.3f}, radius {lim['radius']:.3f}, "
      f"F_0 = {lim['free_energy']:.4f}")
print(f"{'s':>6} {'L1 error':>10} {'energy':>10} {'support':>9}")
for row in rep.rows:
    print(f"{row['s']:>6} {row['L1_err']:>10.4f} {row['energy']:>10.4f} {row['support_radius']:>9.4f}")

# The building block: K_{s/2} * h -> h in L^q as s -> 0.
g = RadialGrid(1, 1024, 4.0)
h = make_profile(g, "indicator", mass=2.0, radius=1.0)
print("||K_{s/2} h - h||_2:", ", ".join(f"{kurokawa_error(h, s, 2.0):.4f}" for s in s_list))

# At m = p' the coupling decides: spreading, concentration, or neither.
for chi, what in ((1.0, "sup_norm"), (4.0, "support_radius"), (2.0, "energy")):
    fr = fair_limit_study(params.replace(m=2.0, chi=chi, M=1.0), s_list, None,
                          RadialGrid(1, 1024, 4.0))
    vals = ", ".join(f"{x:.3g}" for x in fr.column(what))
    print(f"chi = {chi}: {fr.checks['branch']:<13} {what}: {vals}")
