"""Scalar cubic x' = -3x + (2 + sin t) x^3: seeds near 0 are pulled back to 0, large ones blow up."""
import numpy as np

from nabif.attractor import CloudFlow, geometric_schedule, pullback_omega_limit
from nabif.cocycle import DivergenceError, IntegratorConfig, scalar_cubic_system, trajectory
from nabif.hull import HullPoint

system, icfg = scalar_cubic_system(), IntegratorConfig()
p = HullPoint((0.0,))
rng = np.random.default_rng(0)
seeds = rng.uniform(-0.5, 0.5, (50, 1))

t, X = trajectory(p, seeds, 20.0, system, icfg)
print(f"50 seeds in [-1/2, 1/2]: sup |x(t)| on [0, 20] = {np.abs(X).max():.3f}, {np.abs(X[-1]).max():.2e} at t = 20")

om = pullback_omega_limit(CloudFlow(system, icfg), seeds, p, geometric_schedule(1.0, 8), 1e-4)
print(f"pullback omega-limit: converged={om.converged} after {om.stages} stages, distance to 0 "
      f"{np.abs(om.cloud).max():.1e}")

try:
    trajectory(p, [2.5], 5.0, system, icfg)
except DivergenceError as exc:
    print(f"x0 = 2.5 leaves every ball: blow-up detected at t = {exc.time:.3f}")
