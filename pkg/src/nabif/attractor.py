"""Pullback omega-limits of point clouds and the pullback / skew-product attraction checks.

A flow here is any object with `frequencies`, `weights` and
`__call__(q, X, t) -> X_t`, evolving every row of X forward by t from fiber q
and returning +inf rows for trajectories that blew up.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .cocycle import IntegratorConfig, SemilinearSystem, evolve_cloud
from .hull import HullPoint, torus_distance, translate


class NonConvergenceError(RuntimeError):
    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = trace


class NotForwardInvariantError(ValueError):
    pass


def _cloud(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] == 0:
        raise ValueError("empty point cloud")
    return X


def hausdorff_semidist(M, N, weights=None) -> float:
    """sup_{x in M} inf_{y in N} ||x - y||, with ||.|| the weighted Euclidean norm."""
    M, N = _cloud(M), _cloud(N)
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        M, N = M * w, N * w
    fin_m = np.all(np.isfinite(M), axis=1)
    fin_n = np.all(np.isfinite(N), axis=1)
    if not fin_m.all():
        return math.inf
    if not fin_n.any():
        return math.inf
    return float(cdist(M, N[fin_n]).min(axis=1).max())


def hausdorff_dist(M, N, weights=None) -> float:
    return max(hausdorff_semidist(M, N, weights), hausdorff_semidist(N, M, weights))


@dataclass
class NonautCloud:
    """Finite samples of a nonautonomous set: one point cloud per sampled fiber."""

    fibers: dict
    horizon: float = 0.0

    def __post_init__(self):
        if not self.fibers:
            raise ValueError("a nonautonomous cloud needs at least one fiber")
        clean = {}
        for q, X in self.fibers.items():
            X = _cloud(X)
            if not np.all(np.isfinite(X)):
                raise ValueError("cloud states must be finite")
            clean[q] = X
        self.fibers = clean

    @classmethod
    def constant(cls, points, hull_sample) -> "NonautCloud":
        X = _cloud(points)
        return cls({q: X.copy() for q in hull_sample})

    @property
    def is_constant(self) -> bool:
        clouds = list(self.fibers.values())
        return all(c.shape == clouds[0].shape and np.array_equal(c, clouds[0]) for c in clouds[1:])

    def nearest(self, q: HullPoint) -> tuple[HullPoint, float]:
        best = min(self.fibers, key=lambda r: torus_distance(q, r))
        return best, torus_distance(q, best)

    def section(self, q: HullPoint) -> np.ndarray:
        """Cloud at the sampled fiber nearest to q."""
        return self.fibers[self.nearest(q)[0]]

    def to_csv(self, path=None) -> str:
        lines = []
        first = next(iter(self.fibers))
        m = first.dim
        d = self.fibers[first].shape[1]
        lines.append(",".join([f"phase_{i + 1}" for i in range(m)] + [f"x_{k + 1}" for k in range(d)]))
        for q, X in self.fibers.items():
            for row in X:
                lines.append(",".join(repr(v) for v in (*q.phases, *map(float, row))))
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


class CloudFlow:
    """Adapter: evolve clouds with the cocycle integrator."""

    def __init__(self, system: SemilinearSystem, icfg: IntegratorConfig):
        self.system = system
        self.icfg = icfg
        self.frequencies = system.frequencies
        self.weights = system.weights

    def __call__(self, q: HullPoint, X, t: float) -> np.ndarray:
        return evolve_cloud(q, X, t, self.system, self.icfg)[0]


def geometric_schedule(t0: float = 1.0, n_stages: int = 12) -> np.ndarray:
    return t0 * 2.0 ** np.arange(n_stages)


@dataclass
class OmegaLimit:
    cloud: np.ndarray
    fiber: HullPoint
    converged: bool
    stages: int
    times: np.ndarray
    trace: np.ndarray  # symmetric distance between consecutive stage images
    nesting: np.ndarray  # H(image_{i+1}, image_i)
    invariant: bool
    invariance_excess: float


def forward_invariance(flow, U0, q: HullPoint, step: float, tol: float) -> tuple[bool, float]:
    """Is the image of U0 after a short step inside the ball of radius max||U0|| (inflated by 1+tol)?"""
    U0 = _cloud(U0)
    w = np.asarray(flow.weights)
    R = np.max(np.linalg.norm(U0 * w, axis=1))
    img = flow(q, U0, step)
    r = np.max(np.linalg.norm(img * w, axis=1))
    excess = float(r / R - 1.0) if R > 0 else float(r)
    return bool(r <= R * (1 + tol)), excess


def pullback_omega_limit(flow, U0, p: HullPoint, schedule, tol: float, *, invariance_step: float | None = None,
                         check_invariance: bool = True, strict: bool = False) -> OmegaLimit:
    """Images phi(t_i, theta_{-t_i} p) U0 until consecutive images agree to tol.

    Convergence is the symmetric Hausdorff distance between consecutive stage
    images.  When the schedule runs out the last image is returned with
    converged=False, unless strict=True, which raises NonConvergenceError.
    """
    U0 = _cloud(U0)
    schedule = np.asarray(schedule, dtype=float)
    if schedule.size == 0 or np.any(np.diff(schedule) <= 0) or schedule[0] <= 0:
        raise ValueError("schedule must be a nonempty increasing sequence of positive times")
    w = flow.weights
    invariant, excess = True, 0.0
    if check_invariance:
        step = invariance_step if invariance_step is not None else min(0.1, schedule[0])
        invariant, excess = forward_invariance(flow, U0, p, step, tol)
        if strict and not invariant:
            raise NotForwardInvariantError(f"initial cloud is not forward invariant (excess {excess:.3g})")
    prev = None
    trace, nest = [], []
    img = None
    converged = False
    used = 0
    for t in schedule:
        start = translate(p, -t, flow.frequencies)
        img = flow(start, U0, t)
        used += 1
        if prev is not None:
            d = hausdorff_dist(img, prev, w)
            trace.append(d)
            nest.append(hausdorff_semidist(img, prev, w))
            if d < tol:
                converged = True
                break
        prev = img
    trace = np.asarray(trace)
    if not converged and strict:
        raise NonConvergenceError("pullback schedule exhausted without convergence", trace)
    return OmegaLimit(img, p, converged, used, schedule[:used], trace, np.asarray(nest), invariant, excess)


@dataclass
class AttractionReport:
    attracts: bool
    T_grid: np.ndarray
    distances: dict = field(default_factory=dict)  # fiber -> distance per T

    @property
    def final(self) -> float:
        return max(float(d[-1]) for d in self.distances.values())

    def summary(self, label: str = "attraction") -> str:
        return f"{label}: {'attracts' if self.attracts else 'does not attract'} (final distance {self.final:.3e})"


def pullback_attraction_check(K: NonautCloud, B: NonautCloud, flow, T_grid, tol: float) -> AttractionReport:
    """sup_p H(phi(T, theta_{-T} p) B(theta_{-T} p), K(p)) along T_grid; attracts iff the last value < tol."""
    T_grid = np.asarray(T_grid, dtype=float)
    out = {}
    for p in K.fibers:
        ds = []
        for T in T_grid:
            start = translate(p, -T, flow.frequencies)
            img = flow(start, B.section(start), T)
            ds.append(hausdorff_semidist(img, K.fibers[p], flow.weights))
        out[p] = np.asarray(ds)
    final = max(float(d[-1]) for d in out.values())
    return AttractionReport(bool(final < tol), T_grid, out)


def skew_semidist(X, q: HullPoint, K: NonautCloud, weights) -> float:
    """Distance of {q} x X to the graph of K in the product max metric."""
    X = _cloud(X)
    if not np.all(np.isfinite(X)):
        return math.inf
    Xw = X * np.asarray(weights)
    best = np.full(X.shape[0], math.inf)
    for r, Kr in K.fibers.items():
        dq = torus_distance(q, r)
        if dq >= best.max():
            continue
        dx = cdist(Xw, Kr * np.asarray(weights)).min(axis=1)
        best = np.minimum(best, np.maximum(dq, dx))
    return float(best.max())


def skew_attraction_check(K: NonautCloud, B: NonautCloud, flow, T_grid, tol: float,
                          exact_section=None) -> AttractionReport:
    """Forward attraction of the skew-product: H(Phi(T)(graph B), graph K) along T_grid.

    exact_section(q) -> cloud, when available, supplies K on the exact fiber
    theta_T p instead of the nearest sampled one.
    """
    T_grid = np.asarray(T_grid, dtype=float)
    if exact_section is None and K.is_constant:
        # graph of a constant set is the full cylinder, so every fiber is exact
        K0 = next(iter(K.fibers.values()))
        exact_section = lambda q: K0  # noqa: E731
    out = {}
    for p, Bp in B.fibers.items():
        ds = []
        for T in T_grid:
            img = flow(p, Bp, T)
            q = translate(p, T, flow.frequencies)
            Kq = K if exact_section is None else NonautCloud({q: exact_section(q)})
            ds.append(skew_semidist(img, q, Kq, flow.weights))
        out[p] = np.asarray(ds)
    final = max(float(d[-1]) for d in out.values())
    return AttractionReport(bool(final < tol), T_grid, out)


@dataclass
class EquivalenceReport:
    agree: bool
    pullback: AttractionReport
    skew: AttractionReport

    def summary(self) -> str:
        return (f"pullback {'yes' if self.pullback.attracts else 'no'} / skew-product "
                f"{'yes' if self.skew.attracts else 'no'}: {'agree' if self.agree else 'DISAGREE'}")


def skew_equivalence_check(K: NonautCloud, B: NonautCloud, flow, T_grid, tol: float,
                           exact_section=None) -> EquivalenceReport:
    """Run both attraction notions and compare verdicts."""
    pb = pullback_attraction_check(K, B, flow, T_grid, tol)
    sk = skew_attraction_check(K, B, flow, T_grid, tol, exact_section)
    return EquivalenceReport(pb.attracts == sk.attracts, pb, sk)
