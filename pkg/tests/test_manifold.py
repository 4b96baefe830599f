import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import gamma

from nabif.checks import benchmark_problem
from nabif.cocycle import IntegratorConfig, SemilinearSystem
from nabif.galerkin import ModelConfig, norm_weights, raw_nonlinearity
from nabif.hull import Forcing, HullPoint
from nabif.manifold import (ContractionGateError, LPProblem, ManifoldGraph, TruncationConfig, build_graph,
                            build_manifold, contraction_constant, contraction_integral, cutoff_nonlinearity,
                            lipschitz_constant, manifold_invariance_residual, smooth_cutoff, solve_lp)
from nabif.spectral import split

P0 = HullPoint((0.0,))


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_cutoff_shape(a, b):
    lo, hi = sorted((a, b))
    assert smooth_cutoff(lo) >= smooth_cutoff(hi)
    assert 0 <= smooth_cutoff(a) <= 1
    if a <= 0.5:
        assert smooth_cutoff(a) == 1
    if a >= 1:
        assert smooth_cutoff(a) == 0
    if hi - lo > 1e-6:
        assert (smooth_cutoff(lo) - smooth_cutoff(hi)) / (hi - lo) <= 3.75 + 1e-9


def _state_with_norm(cfg, r, rng):
    d = rng.normal(size=cfg.n_modes)
    return d * r / np.linalg.norm(d * norm_weights(cfg))


def test_cutoff_regions(model, rng):
    tc = TruncationConfig(rho=0.08)
    u = _state_with_norm(model, tc.rho / 4, rng)
    assert np.array_equal(cutoff_nonlinearity(0.3, P0, u, tc, model), raw_nonlinearity(np.array([0.3]), u, model))
    assert not np.any(cutoff_nonlinearity(0.3, P0, _state_with_norm(model, 2 * tc.rho, rng), tc, model))


def test_truncated_lipschitz_sampled(model, rng):
    rho = 0.08
    tc = TruncationConfig(rho=rho)
    k = lipschitz_constant(rho, model)
    w = norm_weights(model)
    worst = 0.0
    for _ in range(1000):
        u = _state_with_norm(model, rng.uniform(0, 1.1 * rho), rng)
        v = u + _state_with_norm(model, rng.uniform(1e-6, 0.05) * rho, rng)
        t = rng.uniform(0, 2 * math.pi)
        num = np.linalg.norm(cutoff_nonlinearity(t, P0, u, tc, model) - cutoff_nonlinearity(t, P0, v, tc, model))
        worst = max(worst, num / np.linalg.norm((u - v) * w))
    assert worst <= k


def test_lipschitz_scaling(model):
    assert lipschitz_constant(0.02, model) / lipschitz_constant(0.01, model) == pytest.approx(4)
    assert lipschitz_constant(1e-9, model) < 1e-15
    assert lipschitz_constant(0.1, model.with_forcing(Forcing(sign=0))) == 0


def test_contraction_closed_forms(model):
    assert contraction_integral(0.0, 4.0) == pytest.approx(3.0)
    # alpha = 1/2, eta = 3, k = 0.1 -> 0.47133200825590954 (scipy.integrate.quad)
    assert 0.1 * contraction_integral(0.5, 3.0) == pytest.approx(0.47133200825590954, abs=1e-10)
    ref = quad(lambda s: (2 + s ** -0.5) * math.exp(-0.75 * s), 0, np.inf)[0]
    assert contraction_integral(0.5, 3.0) == pytest.approx(ref, abs=1e-8)
    assert contraction_integral(0.5, 3.0) == pytest.approx(8 / 3 + gamma(0.5) * (4 / 3) ** 0.5, abs=1e-14)
    assert contraction_constant(0.1, 0.5, 3.0, model.with_forcing(Forcing(sign=0))) == 0
    assert contraction_constant(0.08, 0.5, 3.0, model) < 0.9
    with pytest.raises(ContractionGateError, match="M_ρ ≥ 1"):
        contraction_constant(0.5, 0.5, 3.0, model)


def test_benchmark_graph_and_zero():
    g, sol = build_graph(benchmark_problem(), P0, 1.0, 21, T=30.0, dt=0.01, tol=1e-10)
    assert np.max(np.abs(g.values[:, 1] - g.grid ** 2)) < 1e-6
    assert np.all(sol.gamma[g.grid.size // 2] == 0)  # y = 0 gives the zero solution
    assert np.all(g.xi(0.0) == 0)


def test_banach_rate_linear_benchmark():
    # y' = k y on the centre: weighted operator norm 2k/eta, approached by the Picard increments
    k, eta = 0.1, 1.0

    def fld(phases, U):
        out = np.zeros_like(U)
        out[..., 0] = k * U[..., 0]
        return out

    prob = LPProblem([0.0, 1.0], [0], [1], [], np.ones(2), [1.0], fld, eta=eta)
    sol = solve_lp(prob, P0.array, [[0.5]], T=40.0, dt=0.01, tol=1e-12)
    r = sol.ratios[4:10]  # ratio n behaves like (2k/eta) sqrt(n/(n+1))
    assert np.all(np.abs(r / (2 * k / eta) - 1) < 0.1)


def test_certified_manifold(model):
    sp = split(model, k=1)
    tc = TruncationConfig()
    g = build_manifold(model, sp, tc, P0, radius=0.04, n_grid=21)
    assert g.certified and g.M_rho < 0.9
    assert g.L1_emp <= 1.05 * g.L1_bound
    assert np.all(g.xi(0.0) == 0)
    assert np.isfinite(g.L2_emp)
    assert g.max_ratio <= 1.1 * g.M_rho
    fine = build_manifold(model, sp, tc, P0, radius=0.04, n_grid=41)
    assert fine.L2_emp == pytest.approx(g.L2_emp, rel=0.25)
    # horizon truncation: doubling T changes nothing at solver tolerance
    long = build_manifold(model, sp, tc, P0, radius=0.04, n_grid=21, T=2 * g.T_horizon)
    assert np.max(np.abs(long.values - g.values)) < 1e-8


def test_linear_configuration_is_flat():
    cfg = ModelConfig(forcing=Forcing(sign=0))
    g = build_manifold(cfg, split(cfg, k=1), TruncationConfig(), P0, radius=0.04, n_grid=11)
    assert np.max(np.abs(g.values)) < 1e-8


def test_gate_blocks_large_rho(model):
    with pytest.raises(ContractionGateError):
        build_manifold(model, split(model, k=1), TruncationConfig(rho=0.5), P0, radius=0.04, n_grid=11)


def test_csv_roundtrip(model, tmp_path):
    g = build_manifold(model, split(model, k=1), TruncationConfig(), P0, radius=0.04, n_grid=11)
    path = tmp_path / "g.csv"
    g.to_csv(path)
    back = ManifoldGraph.from_csv(path)
    assert np.array_equal(back.values, g.values) and back.M_rho == g.M_rho and back.certified


def _benchmark_system():
    prob = benchmark_problem()
    return SemilinearSystem(prob.rates, prob.frequencies, prob.weights, prob.field)


def test_invariance_residual_benchmark():
    sysm = _benchmark_system()
    icfg = IntegratorConfig(dt=1e-3, scheme="etd4")
    res = []
    for n in (11, 41, 161):
        g, _ = build_graph(benchmark_problem(), P0, 0.2, n, T=30.0, dt=0.01, tol=1e-12)
        res.append(manifold_invariance_residual(g, g, np.array([0.0173, -0.0911, 0.1234]), 1.0, sysm, icfg))
        assert manifold_invariance_residual(g, g, np.zeros(1), 1.0, sysm, icfg) < 1e-14
    assert res[-1] < 1e-5
    assert res[0] > res[1] > res[2]
