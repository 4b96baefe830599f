"""Reusable numerical checks shared by the `verify` command and the test suite."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .attractor import CloudFlow, NonautCloud, skew_equivalence_check
from .cocycle import (IntegratorConfig, SemilinearSystem, cocycle_residual, fit_order, galerkin_system,
                      linear_system, scalar_cubic_system)
from .galerkin import ModelConfig, check_F1, norm_weights
from .hull import Forcing, HullPoint, sample_hull
from .manifold import LPProblem, build_graph
from .spectral import semigroup_bound_check, split


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    data: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


# The composition point s sits inside the first step for every dt below, so
# the composed run uses a step shorter than the direct run by the fixed
# fraction s/(s+t) and the defect exposes the scheme order.  With s spanning
# many steps the leading error terms of both runs coincide and the defect
# converges one order faster.
COCYCLE_S, COCYCLE_T = 0.002, 0.998
COCYCLE_DTS = 0.04 / 2.0 ** np.arange(4)


def cocycle_order(system: SemilinearSystem, x, p: HullPoint, scheme: str, dts=COCYCLE_DTS,
                  s: float = COCYCLE_S, t: float = COCYCLE_T) -> tuple[float, np.ndarray]:
    res = np.array([cocycle_residual(t, s, p, x, system, IntegratorConfig(dt=dt, scheme=scheme)) for dt in dts])
    return fit_order(dts, res), res


def cocycle_order_check(cfg: ModelConfig, scheme: str = "etd2") -> CheckResult:
    nominal = IntegratorConfig(scheme=scheme).order
    rows = []
    ok = True
    x_gal = 0.3 / np.arange(1, cfg.n_modes + 1)
    cases = [("scalar example", scalar_cubic_system(), np.array([0.45])),
             ("galerkin", galerkin_system(cfg), x_gal)]
    orders = {}
    for label, sysm, x in cases:
        q, _ = cocycle_order(sysm, x, HullPoint((0.3,) * sysm.frequencies.size), scheme)
        orders[label] = q
        ok = ok and abs(q - nominal) <= 0.3
        rows.append(f"{label} {q:.2f}")
    return CheckResult("cocycle law order", ok, f"scheme {scheme} (order {nominal}): " + ", ".join(rows), orders)


def random_states(cfg: ModelConfig, n: int, rng: np.random.Generator, radius: float = 1.0) -> np.ndarray:
    """n states with alpha-norm uniform in [0, radius] and random direction."""
    d = rng.standard_normal((n, cfg.n_modes))
    d /= np.linalg.norm(d * norm_weights(cfg), axis=1, keepdims=True)
    return d * rng.uniform(0, radius, (n, 1))


def f1_check(cfg: ModelConfig, rng: np.random.Generator, n_samples: int = 200, n_phases: int = 32) -> CheckResult:
    states = np.vstack([np.zeros(cfg.n_modes), random_states(cfg, n_samples, rng)])
    rep = check_F1(cfg, states, sample_hull(cfg.forcing.m, n_phases))
    return CheckResult("sign condition (F1)", rep.passed,
                       f"{len(states)} states x {n_phases} phases, worst margin {rep.worst_margin:.3e}")


def semigroup_check(cfg: ModelConfig, k: int, t_grid=None) -> CheckResult:
    sp = split(cfg, k=k)
    if t_grid is None:
        t_grid = np.concatenate([-np.geomspace(10, 1e-3, 25), np.geomspace(1e-3, 10, 25)])
    rep = semigroup_bound_check(sp, cfg.alpha, t_grid)
    return CheckResult("semigroup bounds", rep.passed,
                       f"lambda={cfg.lam:g}, minimal constant {rep.min_constant:.4f}", {"report": rep})


def benchmark_problem() -> LPProblem:
    """Center y' = 0, stable v' = -v + y^2: the invariant graph is exactly v = y^2."""

    def fld(phases, U):
        out = np.zeros_like(U)
        out[..., 1] = U[..., 0] ** 2
        return out

    return LPProblem([0.0, 1.0], [0], [1], [], np.ones(2), [1.0], fld, eta=1.0)


def benchmark_check(T: float = 30.0, dt: float = 0.01, tol: float = 1e-10, n_grid: int = 21) -> CheckResult:
    g, _ = build_graph(benchmark_problem(), HullPoint((0.0,)), 1.0, n_grid, T=T, dt=dt, tol=tol)
    err = float(np.max(np.abs(g.values[:, 1] - g.grid ** 2)))
    return CheckResult("benchmark manifold", err <= 1e-5, f"sup |xi(y) - y^2| = {err:.2e}", {"error": err})


@dataclass
class EquivalenceCase:
    label: str
    flow: object
    K: NonautCloud
    B: NonautCloud
    T_grid: np.ndarray
    tol: float
    expect: bool


def equivalence_cases(rng: np.random.Generator, n_fibers: int = 4) -> list[EquivalenceCase]:
    """Attracting and non-attracting configurations for the pullback / skew-product comparison."""
    cases = []
    sc = CloudFlow(scalar_cubic_system(), IntegratorConfig(dt=0.01))
    fib1 = sample_hull(1, n_fibers)
    basin = rng.uniform(-0.5, 0.5, (20, 1))
    T = np.array([5.0, 10.0, 20.0])
    zero1 = NonautCloud.constant([[0.0]], fib1)
    cases.append(EquivalenceCase("scalar, basin, K={0}", sc, zero1, NonautCloud.constant(basin, fib1), T, 1e-4,
                                 True))
    cases.append(EquivalenceCase("scalar, |x| in [2, 2.5], K={0}", sc, zero1,
                                 NonautCloud.constant(rng.uniform(2.0, 2.5, (10, 1)), fib1), T, 1e-4, False))
    cases.append(EquivalenceCase("scalar, basin, K=[-0.1, 0.1]", sc,
                                 NonautCloud.constant(np.linspace(-0.1, 0.1, 21)[:, None], fib1),
                                 NonautCloud.constant(basin, fib1), T, 1e-4, True))
    cases.append(EquivalenceCase("scalar, basin, K={0.3}", sc, NonautCloud.constant([[0.3]], fib1),
                                 NonautCloud.constant(basin, fib1), T, 1e-4, False))
    lin = CloudFlow(linear_system([1.0]), IntegratorConfig(dt=0.01))
    cases.append(EquivalenceCase("linear decay, K=B={0}", lin, zero1, zero1, T, 1e-4, True))
    qf = Forcing(frequencies=(1.0, math.sqrt(2.0)), symbol="quasi_two_freq", sign=1)
    fib2 = sample_hull(2, n_fibers)
    qs = CloudFlow(scalar_cubic_system(3.0, qf), IntegratorConfig(dt=0.01))
    cases.append(EquivalenceCase("quasi-periodic scalar, basin, K={0}", qs, NonautCloud.constant([[0.0]], fib2),
                                 NonautCloud.constant(basin, fib2), T, 1e-4, True))
    gal_dt = IntegratorConfig(dt=0.02)
    Tg = np.array([40.0, 80.0, 120.0])
    for lam, expect in ((0.9, True), (1.2, False)):
        cfg = ModelConfig(lam=lam)
        fl = CloudFlow(galerkin_system(cfg), gal_dt)
        X = random_states(cfg, 12, rng, 0.3)
        cases.append(EquivalenceCase(f"galerkin lam={lam}, K={{0}}", fl,
                                     NonautCloud.constant(np.zeros((1, cfg.n_modes)), fib1[:2]),
                                     NonautCloud.constant(X, fib1[:2]), Tg, 1e-4, expect))
    return cases


def equivalence_check(rng: np.random.Generator, cases=None) -> CheckResult:
    cases = equivalence_cases(rng) if cases is None else cases
    lines, ok = [], True
    for c in cases:
        rep = skew_equivalence_check(c.K, c.B, c.flow, c.T_grid, c.tol)
        ok = ok and rep.agree and rep.pullback.attracts == c.expect
        lines.append(f"{c.label}: {rep.summary()} (expected {'yes' if c.expect else 'no'})")
    return CheckResult("pullback / skew-product equivalence", ok, f"{len(cases)} configurations agree" if ok
                       else "verdicts disagree", {"lines": lines})
