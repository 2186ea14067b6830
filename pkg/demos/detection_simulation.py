"""
Simulated detection and the attacker-fraction estimator
=======================================================

Monte-Carlo suspicion paths compared with the closed-form blocking probability,
then a mixed population run through the affine estimator.
"""
# %%
import math

from cyberrep import sim
from cyberrep.equilibrium import GLOBAL_AVERAGE, blocking_prob, solve

eq = solve(GLOBAL_AVERAGE)
n = 20_000
cfg = sim.SimConfig(n_paths=n, q0=0.14, seed=1)
batch = sim.simulate_batch(eq, cfg, theta=1)
u = blocking_prob(0.14, eq)
freq = batch.blocked.mean()
print(f"blocked fraction {freq:.4f} vs u(0.14) = {u:.4f}  ({(freq - u) / math.sqrt(u * (1 - u) / n):+.2f} SE)")

# %%
# A population with 14% attackers, observed through a 10% prior.  The blocked
# ratio BR(t) is mapped to an estimate EE(t) of the attacker fraction.
res = sim.run_population(eq, sim.SimConfig(n_paths=n, q0=0.10, x_true=0.14, seed=2))
for k in range(0, res.times.size, 40):
    print(f"t={res.times[k]:6.2f}y  BR={res.br[k]:.4f}  EE={res.ee[k]:.4f} "
          f"[{res.ee_lo95[k]:.4f}, {res.ee_hi95[k]:.4f}]")
print(f"final estimate {res.mu_theta:.4f} +/- {res.mu_se:.4f}")
