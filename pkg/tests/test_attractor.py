import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nabif.attractor import (CloudFlow, NonautCloud, NonConvergenceError, NotForwardInvariantError,
                             geometric_schedule, hausdorff_dist, hausdorff_semidist, pullback_attraction_check,
                             pullback_omega_limit, skew_attraction_check, skew_equivalence_check, skew_semidist)
from nabif.cocycle import IntegratorConfig, linear_system, scalar_cubic_system
from nabif.hull import HullPoint, sample_hull

P0 = HullPoint((0.0,))
clouds = arrays(float, st.tuples(st.integers(1, 6), st.just(2)), elements=st.floats(-10, 10))


def test_semidistance_examples():
    M = np.array([[0.0], [2.0]])
    assert hausdorff_semidist(M, M) == 0
    assert hausdorff_semidist([[1.0]], [[0.0]], [1.0]) == 1
    assert hausdorff_semidist(M, [[0.0]]) == 2 and hausdorff_semidist([[0.0]], M) == 0
    assert hausdorff_semidist([[np.inf]], [[0.0]]) == math.inf
    assert hausdorff_semidist([[1.0, 1.0]], [[0.0, 0.0]], [1.0, 2.0]) == pytest.approx(math.sqrt(5))


@settings(max_examples=60)
@given(clouds, clouds, clouds)
def test_triangle_inequality(M, N, P):
    assert hausdorff_semidist(M, P) <= hausdorff_semidist(M, N) + hausdorff_dist(N, P) + 1e-9


@given(clouds)
def test_semidistance_zero_on_subsets(M):
    assert hausdorff_semidist(M[:1], M) == 0
    assert hausdorff_dist(M, M) == 0


def test_scalar_example_pullback_to_zero(rng):
    flow = CloudFlow(scalar_cubic_system(), IntegratorConfig())
    U0 = rng.uniform(-0.5, 0.5, (50, 1))
    om = pullback_omega_limit(flow, U0, P0, geometric_schedule(1.0, 8), 1e-4)
    assert om.converged and om.invariant
    assert np.max(np.abs(om.cloud)) < 1e-4


def test_linear_decay_to_zero():
    flow = CloudFlow(linear_system([0.5, 2.0]), IntegratorConfig())
    om = pullback_omega_limit(flow, np.array([[1.0, -1.0], [0.3, 0.2]]), P0, geometric_schedule(1.0, 8), 1e-6)
    assert om.converged and np.max(np.abs(om.cloud)) < 1e-6


def test_invariance_precondition_and_strict_mode():
    flow = CloudFlow(scalar_cubic_system(), IntegratorConfig())
    with pytest.raises(NotForwardInvariantError):
        pullback_omega_limit(flow, [[2.0], [2.5]], P0, geometric_schedule(0.1, 3), 1e-4, strict=True)
    with pytest.raises(NonConvergenceError):
        pullback_omega_limit(flow, [[0.4]], P0, geometric_schedule(0.01, 2), 1e-12, strict=True)
    with pytest.raises(ValueError):
        pullback_omega_limit(flow, [[0.4]], P0, [2.0, 1.0], 1e-4)


def test_attraction_checks(rng):
    flow = CloudFlow(scalar_cubic_system(), IntegratorConfig())
    fib = sample_hull(1, 4)
    K = NonautCloud.constant([[0.0]], fib)
    inside = NonautCloud.constant(rng.uniform(-0.5, 0.5, (20, 1)), fib)
    outside = NonautCloud.constant([[2.0], [-2.2]], fib)
    T = [5.0, 10.0, 20.0]
    assert pullback_attraction_check(K, inside, flow, T, 1e-4).attracts
    assert not pullback_attraction_check(K, outside, flow, T, 1e-4).attracts
    lin = CloudFlow(linear_system([1.0]), IntegratorConfig())
    rep = pullback_attraction_check(K, K, lin, T, 1e-4)
    assert rep.attracts and rep.final == 0


def test_skew_metric():
    K = NonautCloud({HullPoint((0.0,)): np.array([[0.0]]), HullPoint((math.pi,)): np.array([[1.0]])})
    assert skew_semidist([[0.0]], HullPoint((0.0,)), K, [1.0]) == 0
    # nearest in the product max metric: fiber distance 0.1 vs state distance 1
    assert skew_semidist([[1.0]], HullPoint((0.1,)), K, [1.0]) == pytest.approx(1.0)
    assert skew_semidist([[1.0]], HullPoint((3.0,)), K, [1.0]) == pytest.approx(math.pi - 3.0)


def test_skew_attraction_uses_graph(rng):
    flow = CloudFlow(scalar_cubic_system(), IntegratorConfig())
    fib = sample_hull(1, 3)
    K = NonautCloud.constant([[0.0]], fib)
    B = NonautCloud.constant(rng.uniform(-0.5, 0.5, (10, 1)), fib)
    assert skew_attraction_check(K, B, flow, [5.0, 20.0], 1e-4).attracts
    rep = skew_equivalence_check(K, B, flow, [5.0, 20.0], 1e-4)
    assert rep.agree and rep.pullback.attracts


def test_cloud_csv():
    c = NonautCloud.constant([[0.0, 1.0]], sample_hull(1, 2))
    lines = c.to_csv().splitlines()
    assert lines[0] == "phase_1,x_1,x_2" and len(lines) == 3
