import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import quad

from nabif.galerkin import (ModelConfig, check_F1, cubic_projection, dirichlet_eigenvalues, fractional_norm,
                            nonlinearity_modal, quartic_integral)
from nabif.hull import Forcing, HullPoint, sample_hull


def test_eigenvalues():
    assert np.allclose(dirichlet_eigenvalues(math.pi, 3), [1, 4, 9])
    assert np.allclose(dirichlet_eigenvalues(math.pi, 1), [1])
    assert np.allclose(dirichlet_eigenvalues(2 * math.pi, 2), [0.25, 1])


def test_fractional_norm():
    cfg = ModelConfig(n_modes=3)
    assert fractional_norm([1, 0, 0], 0.0, cfg) == pytest.approx(1)
    assert fractional_norm([1, 0, 0], 0.5, cfg) == pytest.approx(1)
    assert fractional_norm([0, 1, 0], 0.5, cfg) == pytest.approx(2)


def test_single_mode_cubic():
    # sin^3 = (3 sin x - sin 3x)/4 with orthonormal sines: 3/(2 pi) a^3 on mode 1, -1/(2 pi) a^3 on mode 3
    c, a = 2.0, 0.7
    cfg = ModelConfig(n_modes=4, forcing=Forcing(symbol="constant", coeffs=(c,), sign=-1))
    out = nonlinearity_modal(0.3, HullPoint((0.0,)), [a, 0, 0, 0], cfg)
    assert np.allclose(out, [-c * 3 / (2 * math.pi) * a ** 3, 0, c / (2 * math.pi) * a ** 3, 0], atol=1e-14)
    assert np.allclose(nonlinearity_modal(0.3, HullPoint((0.0,)), np.zeros(4), cfg), 0)
    cfg2 = ModelConfig(n_modes=4, forcing=Forcing(symbol="constant", coeffs=(2 * c,), sign=-1))
    assert np.allclose(nonlinearity_modal(0, HullPoint((0.0,)), [a, 0.1, 0, 0], cfg2),
                       2 * nonlinearity_modal(0, HullPoint((0.0,)), [a, 0.1, 0, 0], cfg))


def test_cubic_projection_matches_quadrature(rng):
    L, n = 2.0, 5
    u = rng.normal(size=n)

    def field(x):
        return sum(u[k] * math.sqrt(2 / L) * math.sin((k + 1) * math.pi * x / L) for k in range(n))

    ref = [quad(lambda x: field(x) ** 3 * math.sqrt(2 / L) * math.sin((j + 1) * math.pi * x / L), 0, L,
                limit=200)[0] for j in range(n)]
    assert np.allclose(cubic_projection(u, L), ref, atol=1e-10)
    kappa = quad(lambda x: field(x) ** 4, 0, L, limit=200)[0]
    assert quartic_integral(u, L) == pytest.approx(kappa, rel=1e-10)


def test_F1_examples():
    cfg = ModelConfig(forcing=Forcing(symbol="constant", coeffs=(2.0,), sign=-1))
    e1 = np.eye(cfg.n_modes)[0]
    # int_0^pi (2/pi)^2 sin^4 = 3/(2 pi)
    assert quartic_integral(e1, math.pi) == pytest.approx(3 / (2 * math.pi))
    pairing = float(nonlinearity_modal(0, HullPoint((0.0,)), e1, cfg) @ e1)
    assert pairing == pytest.approx(-2 * 3 / (2 * math.pi))
    rep = check_F1(cfg, [np.zeros(cfg.n_modes), e1], sample_hull(1, 4))
    assert rep.passed and rep.margins[0].max() == 0
    flipped = check_F1(cfg.with_forcing(Forcing(symbol="constant", coeffs=(2.0,), sign=1)), [e1],
                       sample_hull(1, 4))
    assert flipped.passed
    # the linear configuration has no sign condition to check
    with pytest.raises(ValueError):
        check_F1(cfg.with_forcing(Forcing(sign=0)), [e1], sample_hull(1, 2))


@settings(max_examples=40, deadline=None)
@given(arrays(float, 6, elements=st.floats(-3, 3)))
def test_pairing_is_quartic_integral(u):
    # (P(u^3), u) = int u^4 exactly for states in the Galerkin space
    assert float(cubic_projection(u, math.pi) @ u) == pytest.approx(float(quartic_integral(u, math.pi)),
                                                                     rel=1e-9, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(float, 4, elements=st.floats(-3, 3)), st.floats(0, 0.9), st.floats(0, 0.9))
def test_norm_monotone_in_alpha(u, a, b):
    cfg = ModelConfig(n_modes=4)
    lo, hi = sorted((a, b))
    assert fractional_norm(u, lo, cfg) <= fractional_norm(u, hi, cfg) * (1 + 1e-12) + 1e-300
