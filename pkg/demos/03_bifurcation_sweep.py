"""Pitchfork-like bifurcation of the forced model: H(B_lambda, 0) against lambda on two fibers.

The branch grows like sqrt(lambda - lambda0); for constant forcing h = 2 the amplitude
is sqrt((lambda - 1) 2 pi / 6), printed alongside for comparison.
"""
import math

from nabif.bifurcation import fitted_exponent, sweep
from nabif.config import load
from nabif.galerkin import ModelConfig
from nabif.hull import Forcing, HullPoint

exp = load(None, environ={})
lams = [0.95, 1.0, 1.02, 1.05, 1.1]
d = sweep(exp.model, lams, n_fibers=2, params=exp.sweep)
for p in d.fibers():
    rows = d.series(p)
    print(f"fiber {p.phases}:")
    for r in rows:
        print(f"  lambda = {r.lam:.3f}  H = {r.H:.4e}  repeller = {r.repeller}")
    side = [r for r in rows if d.bifurcating(r.lam)]
    print(f"  fitted exponent {fitted_exponent([r.lam - d.lambda0 for r in side], [r.H for r in side]):.3f}")

const = ModelConfig(forcing=Forcing(symbol="constant", coeffs=(2.0,), sign=-1))
dc = sweep(const, [1.02, 1.05, 1.1], fibers=[HullPoint((0.0,))], params=exp.sweep)
for r in dc.rows:
    print(f"h = 2, lambda = {r.lam}: amplitude {r.amplitude:.4f}, closed form {math.sqrt((r.lam - 1) * math.pi / 3):.4f}")
