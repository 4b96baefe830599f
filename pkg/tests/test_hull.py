import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nabif.hull import Forcing, HullPoint, evaluate_forcing, sample_hull, torus_distance, translate, wrap

angles = st.floats(-50, 50, allow_nan=False)
times = st.floats(-100, 100, allow_nan=False)


def test_translate_examples():
    assert translate(HullPoint((0.0,)), math.pi / 2, (1.0,)).phases[0] == pytest.approx(math.pi / 2)
    assert torus_distance(translate(HullPoint((0.0,)), 2 * math.pi, (1.0,)), HullPoint((0.0,))) < 1e-12
    q = translate(HullPoint((1.0, 2.0)), 1.0, (1.0, math.sqrt(2)))
    assert q.phases[0] == pytest.approx(2.0)
    assert q.phases[1] == pytest.approx((2.0 + math.sqrt(2)) % (2 * math.pi))


def test_forcing_examples():
    f = Forcing()
    assert evaluate_forcing(f, HullPoint((0.0,)), 0.0) == pytest.approx(2.0)
    assert evaluate_forcing(f, HullPoint((0.0,)), math.pi / 2) == pytest.approx(3.0)
    assert evaluate_forcing(f, HullPoint((math.pi,)), math.pi / 2) == pytest.approx(1.0)


def test_forcing_validation():
    with pytest.raises(ValueError):
        Forcing(symbol="nope")
    with pytest.raises(ValueError):
        Forcing(symbol="quasi_two_freq")  # needs two frequencies
    with pytest.raises(ValueError):
        Forcing(coeffs=(1.0, 1.0))  # h_min = 0 < delta
    with pytest.raises(ValueError):
        Forcing(sign=2)
    q = Forcing(frequencies=(1.0, math.sqrt(2)), symbol="quasi_two_freq")
    assert q.h_min == pytest.approx(1.0) and q.h_max == pytest.approx(3.0)


def test_sample_hull():
    pts = sample_hull(1, 4)
    assert np.allclose([p.phases[0] for p in pts], [0, math.pi / 2, math.pi, 3 * math.pi / 2])
    assert sample_hull(1, 1) == [HullPoint((0.0,))]
    two = sample_hull(2, 4)
    assert len(set(two)) == 4 and all(p.dim == 2 for p in two)
    assert len(set(sample_hull(2, 7))) == 7
    with pytest.raises(ValueError, match="empty hull sample"):
        sample_hull(1, 0)


@given(st.lists(angles, min_size=1, max_size=3), times, times)
def test_flow_law(ph, s, t):
    w = np.linspace(1.0, math.sqrt(2), len(ph))
    p = HullPoint(tuple(ph))
    a = translate(p, s + t, w)
    b = translate(translate(p, s, w), t, w)
    assert torus_distance(a, b) < 1e-10


@given(st.lists(angles, min_size=1, max_size=4))
def test_wrap_range_and_idempotence(ph):
    w = wrap(ph)
    assert np.all((w >= 0) & (w < 2 * math.pi))
    assert np.allclose(wrap(w), w)


@settings(max_examples=50)
@given(angles, times)
def test_forcing_stays_in_bounds(ph, t):
    f = Forcing()
    assert f.h_min - 1e-12 <= evaluate_forcing(f, HullPoint((ph,)), t) <= f.h_max + 1e-12
