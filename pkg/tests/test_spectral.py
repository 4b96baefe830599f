import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nabif.galerkin import ModelConfig
from nabif.spectral import OutOfWindowError, SpectralConfigError, project, semigroup_bound_check, split

CFG3 = ModelConfig(n_modes=3, lam=1.0)


def test_split_first_eigenvalue():
    sp = split(CFG3, k=1)
    assert sp.lambda0 == 1 and sp.eta == 3
    assert sp.center_idx == (0,) and sp.stable_idx == (1, 2) and sp.unstable_idx == ()
    assert np.allclose(sp.rates, [0, 3, 8])


def test_split_second_eigenvalue():
    sp = split(ModelConfig(n_modes=3, lam=4.0), lambda0=4.0)
    assert sp.center_idx == (1,) and sp.unstable_idx == (0,) and sp.stable_idx == (2,)
    assert sp.eta == 3 and sp.rates[1] == 0


def test_split_errors():
    with pytest.raises(SpectralConfigError):
        split(CFG3, lambda0=2.0)
    with pytest.raises(OutOfWindowError):
        split(ModelConfig(n_modes=3, lam=2.0), k=1)
    with pytest.raises(ValueError):
        split(CFG3)


def test_index_sets_do_not_move_inside_window():
    base = split(CFG3, k=1)
    for lam in np.linspace(1 - 0.74, 1 + 0.74, 9):
        sp = split(CFG3.with_lambda(lam), k=1)
        assert (sp.center_idx, sp.stable_idx, sp.unstable_idx) == (base.center_idx, base.stable_idx,
                                                                   base.unstable_idx)


@given(arrays(float, 3, elements=st.floats(-1e3, 1e3)))
def test_projections(u):
    sp = split(CFG3, k=1)
    assert np.array_equal(project(u, sp, "c") + project(u, sp, "+") + project(u, sp, "-"), u)
    assert np.array_equal(project(project(u, sp, "c"), sp, "c"), project(u, sp, "c"))
    assert not np.any(project(project(u, sp, "c"), sp, "+-"))


def test_center_bound_at_lambda0():
    rep = semigroup_bound_check(split(CFG3, k=1), 0.5, [-5, -1, 0.5, 3])
    centre = [e for e in rep.entries if e.family == "center" and e.quantity == "e^{-At}"]
    assert all(e.norm == 1.0 for e in centre)
    assert rep.passed


def test_stable_bound_at_lambda_1_1():
    # exact mode-wise values: the literal bound t^-a e^{-3 eta t/4} fails at t = 1
    # (mode 2 gives 2 e^{-2.9} = 0.1100 > e^{-2.25} = 0.1054), holds at t = 0.1 and t = 10
    sp = split(ModelConfig(lam=1.1), k=1)
    rep = semigroup_bound_check(sp, 0.5, [0.1, 1.0, 10.0])
    stable = {e.t: e for e in rep.entries if e.family == "stable" and e.quantity == "A^a e^{-At}"}
    assert stable[0.1].slack > 0 and stable[10.0].slack > 0
    assert stable[1.0].norm == pytest.approx(2 * math.exp(-2.9))
    assert stable[1.0].bound == pytest.approx(math.exp(-2.25))
    assert not rep.passed
    assert rep.min_constant == pytest.approx(2 * math.exp(-2.9) / math.exp(-2.25), rel=1e-9)


def test_unstable_bound_lambda0_mu2():
    sp = split(ModelConfig(n_modes=3, lam=4.1), lambda0=4.0)
    rep = semigroup_bound_check(sp, 0.5, -np.geomspace(1e-3, 10, 20))
    fam = rep.by_family()
    assert fam[("unstable", "A^a e^{-At}")] >= 0 and fam[("unstable", "e^{-At}")] >= 0
    # the weighted centre bound carries mu_2^a = 2 at t -> 0 and cannot hold with constant 1 here
    assert fam[("center", "A^a e^{-At}")] < 0
    assert rep.min_constant == pytest.approx(2.0, rel=1e-3)


def test_bounds_at_default_lambda(model):
    t = np.concatenate([-np.geomspace(10, 1e-3, 25), np.geomspace(1e-3, 10, 25)])
    assert semigroup_bound_check(split(model, k=1), model.alpha, t).passed
