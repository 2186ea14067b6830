"""
How the equilibrium moves with its parameters
=============================================

One-parameter sweeps around the global average, plus the regime switch.
"""
# %%
import numpy as np

from cyberrep import analysis
from cyberrep.equilibrium import GLOBAL_AVERAGE, ModelParams, solve

for name, values in [("sigma", [2, 4, 6, 8]), ("M", [5, 10, 20, 100]), ("l", [0.5, 1.0, 1.52, 2.0])]:
    print(f"-- varying {name}")
    for row in analysis.comparative_statics(GLOBAL_AVERAGE, name, values):
        print(f"{name}={row.value:<6g} {row.regime:<9s} p={row.p:.4f}  q_hat={row.q_hat:.4f}")

# %%
# Small caps on attack intensity push the game into the saturated regime, where
# the attacker always plays the cap and the threshold has an elementary form.
sat = solve(ModelParams(M=1.0, l=1.52, r=0.39, sigma=4.1))
print(sat.regime.value, f"p = {sat.p:.4f}", f"rho = {sat.params.ratio:.2f}")

# %%
# The whole 4x4x4x4 lattice used by the acceptance suite, checked for any
# violation of the expected directions.
problems = analysis.statics_violations(
    l_values=[0.5, 1.0, 1.5, 2.0], r_values=[0.1, 0.39, 1.0, 4.0],
    sigma_values=[1.0, 4.1, 8.0, 40.0], M_values=[1.0, 5.0, 20.0, 100.0], q_points=np.linspace(0.05, 0.95, 10))
print(len(problems), "violations")
