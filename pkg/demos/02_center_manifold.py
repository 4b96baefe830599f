"""Certified center manifold of the Galerkin model at lambda = lambda0 and its contraction budget."""
import numpy as np

from nabif.config import load
from nabif.hull import HullPoint
from nabif.manifold import build_manifold, contraction_constant
from nabif.spectral import split

exp = load(None, environ={})
cfg = exp.model.with_lambda(1.0)
sp = split(cfg, k=1)
print(f"lambda0 = {sp.lambda0}, eta = {sp.eta}, center modes {list(sp.center_idx)}")
for rho in (0.04, 0.08, 0.12):
    print(f"  rho = {rho}: M_rho = {contraction_constant(rho, cfg.alpha, sp.eta, cfg, check=False):.3f}")

for phase in (0.0, np.pi / 2, np.pi):
    g = build_manifold(cfg, sp, exp.truncation, HullPoint((phase,)), radius=0.04, n_grid=21)
    i = int(np.argmax(np.abs(g.values).max(axis=1)))
    print(f"fiber {phase:.3f}: sup|xi| = {np.abs(g.values).max():.3e} (at y = {g.grid[i]:+.3f}), "
          f"L1 empirical {g.L1_emp:.2e} <= bound {g.L1_bound:.3f}, Picard iterations {g.iterations}")
