"""
Equilibrium at the global-average parameters
============================================

Solve the attacker/defender game once and look at the policy and value curves.
"""
# %%
# The parameter set below is the global-average calibration: loss weight
# ``l``, termination rate ``r`` (per year), signal noise ``sigma`` and the
# attack-intensity cap ``M``.
import numpy as np

from cyberrep import analysis
from cyberrep.equilibrium import GLOBAL_AVERAGE, solve

eq = solve(GLOBAL_AVERAGE)
print(eq.regime.value, "regime")
print(f"blocking threshold p = {eq.p:.6f}")
print(f"full-intensity cutoff q* = {eq.q_star:.3e}")

# %%
# The attacker chooses the prior attack probability that maximises q V(q).
best = analysis.optimal_attack_prob(eq)
print(f"q_hat = {best.q_hat:.6f}, expected theft per suspect = {best.objective:.4f}")
print(f"V(q_hat) = {eq.V(best.q_hat):.4f} (millions of dollars)")
print(f"mean detection time = {365 * (1 - eq.u(best.q_hat)) / eq.params.r:.1f} days")

# %%
# Intensity falls as suspicion rises; the blocking probability rises to one at p.
q = np.linspace(0.02, eq.p, 8)
for qi, a, u in zip(q, eq.alpha(q), eq.u(q)):
    print(f"q={qi:.3f}  alpha={a:8.3f}  u={u:.4f}")

# %%
# The closed forms can be checked against their defining equations by finite
# differences; every residual should sit well below 1e-4.
report = analysis.verify_closed_forms(eq)
for name, value in report.residuals.items():
    print(f"{name:>20s}  {value:.2e}")
print("passed:", report.passed)
