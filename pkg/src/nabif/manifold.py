"""Local invariant manifolds by Picard iteration of the Lyapunov-Perron integral equation.

For a diagonal system u' = -d*u + g(theta, u), the trajectory gamma through a
center value y solves

    gamma_c(t) = e^{-d_c t} y + int_0^t e^{-d_c (t - s)} g_c ds
    gamma_+(t) = int_{-inf}^t e^{-d_+ (t - s)} g_+ ds
    gamma_-(t) = -int_t^{inf} e^{-d_- (t - s)} g_- ds

and the graph of the manifold is xi(y) = gamma_{+-}(0).  The integrals are
truncated to [-T, T] and evaluated by exponential product integration with
g linear on each cell, which is exact for the linear part.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.signal import lfilter
from scipy.special import gamma as gamma_fn

from .cocycle import SemilinearSystem, galerkin_system, phi_functions
from .galerkin import ModelConfig, norm_weights, raw_nonlinearity, spectrum
from .hull import HullPoint, torus_distance, wrap, TWO_PI
from .spectral import OutOfWindowError, SpectralSplit

CUTOFF_SLOPE = 3.75  # max |chi'| of the quintic transition on [1/2, 1]
CUTOFF_CONSTANT = (3.0 + CUTOFF_SLOPE) / 3.0


class ContractionGateError(ValueError):
    pass


class NonContractionError(RuntimeError):
    pass


class CutoffActiveError(ValueError):
    pass


class DomainError(ValueError):
    pass


def smooth_cutoff(z):
    """chi(z) = 1 for z <= 1/2, 0 for z >= 1, quintic smoothstep in between (C^2)."""
    s = np.clip((np.asarray(z, dtype=float) - 0.5) / 0.5, 0.0, 1.0)
    return 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)


@dataclass(frozen=True)
class TruncationConfig:
    rho: float = 0.08
    M_cap: float = 1.0
    enforce_gate: bool = True

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not self.M_cap > 0:
            raise ValueError("M_cap must be positive")

    def chi(self, norms):
        return smooth_cutoff(np.asarray(norms) / self.rho)


def cutoff_nonlinearity(t: float, p: HullPoint, u, tc: TruncationConfig, cfg: ModelConfig) -> np.ndarray:
    """chi(||u||_alpha / rho) * (+/- h u^3)."""
    u = np.asarray(u, dtype=float)
    phases = p.array + np.asarray(cfg.forcing.frequencies) * t
    chi = tc.chi(np.linalg.norm(u * norm_weights(cfg), axis=-1))
    return np.asarray(chi)[..., None] * raw_nonlinearity(phases, u, cfg)


def truncated_system(cfg: ModelConfig, tc: TruncationConfig) -> SemilinearSystem:
    return galerkin_system(cfg, envelope=tc.chi)


def embedding_constant(cfg: ModelConfig) -> float:
    """c with sup|u| <= c ||u||_alpha on the Galerkin space."""
    mu = spectrum(cfg)
    return math.sqrt(2.0 / cfg.L) * math.sqrt(float(np.sum(mu ** (-2 * cfg.alpha))))


def lipschitz_constant(rho: float, cfg: ModelConfig) -> float:
    """Upper bound on the Lipschitz constant X^alpha -> L^2 of the truncated cubic."""
    if cfg.forcing.sign == 0:
        return 0.0
    c = embedding_constant(cfg)
    mu1 = spectrum(cfg)[0]
    return CUTOFF_CONSTANT * 3.0 * cfg.forcing.h_max * (c * rho) ** 2 * mu1 ** (-cfg.alpha)


def contraction_integral(alpha: float, eta: float) -> float:
    """int_0^inf (2 + s^-alpha) e^{-eta s / 4} ds."""
    return 8.0 / eta + gamma_fn(1.0 - alpha) * (4.0 / eta) ** (1.0 - alpha)


def contraction_constant(rho: float, alpha: float, eta: float, cfg: ModelConfig, *, check: bool = True) -> float:
    """M_rho = k(rho) * int_0^inf (2 + s^-alpha) e^{-eta s/4} ds; must be < 1."""
    M = lipschitz_constant(rho, cfg) * contraction_integral(alpha, eta)
    if check and M >= 1.0:
        raise ContractionGateError(
            f"M_ρ ≥ 1 (M_ρ = {M:.4g} at ρ = {rho:g}): shrink ρ for a certified contraction"
        )
    return M


def default_horizon(eta: float, tol: float) -> float:
    """T with e^{-eta T / 4} < tol / 10."""
    return 4.0 / eta * math.log(10.0 / tol)


@dataclass(eq=False)
class LPProblem:
    """Diagonal system u' = -rates*u + field(phases, u) split into center / stable / unstable modes."""

    rates: np.ndarray
    center: np.ndarray
    stable: np.ndarray
    unstable: np.ndarray
    weights: np.ndarray
    frequencies: np.ndarray
    field: Callable
    eta: float
    M_rho: float | None = None

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        for name in ("center", "stable", "unstable"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=int))

    @property
    def dim(self) -> int:
        return self.rates.size

    def norm(self, U) -> np.ndarray:
        return np.linalg.norm(np.asarray(U) * self.weights, axis=-1)


def lp_problem(cfg: ModelConfig, sp: SpectralSplit, tc: TruncationConfig, *, M_rho: float | None = None) -> LPProblem:
    if abs(cfg.lam - sp.lam) > 1e-14:
        raise ValueError("split and model disagree on lam")
    w = norm_weights(cfg)

    def fld(phases, U):
        chi = tc.chi(np.linalg.norm(U * w, axis=-1))
        return chi[..., None] * raw_nonlinearity(phases, U, cfg)

    return LPProblem(sp.rates, sp.center_idx, sp.stable_idx, sp.unstable_idx, w,
                     cfg.forcing.frequencies, fld, sp.eta, M_rho)


def _forward_integral(G, d, h, i0):
    """F_j = int_{t_i0}^{t_j} e^{-d (t_j - s)} G ds for j >= i0 (zero before), G: (batch, n_t)."""
    z = -d * h
    p1, p2, _ = phi_functions(np.array([z]))
    w0, w1 = h * (p1[0] - p2[0]), h * p2[0]
    out = np.zeros_like(G)
    x = w0 * G[:, i0:-1] + w1 * G[:, i0 + 1:]
    if x.shape[1]:
        out[:, i0 + 1:] = lfilter([1.0], [1.0, -math.exp(z)], x, axis=1)
    return out


def _backward_integral(G, d, h, i1):
    """B_j = int_{t_j}^{t_i1} e^{-d (t_j - s)} G ds for j <= i1 (zero after)."""
    z = d * h
    p1, p2, _ = phi_functions(np.array([z]))
    w_lo, w_hi = h * p2[0], h * (p1[0] - p2[0])
    out = np.zeros_like(G)
    if i1 == 0:
        return out
    rev = G[:, i1::-1]
    x = w_lo * rev[:, 1:] + w_hi * rev[:, :-1]
    if x.shape[1]:
        out[:, i1 - 1::-1] = lfilter([1.0], [1.0, -math.exp(z)], x, axis=1)
    return out


@dataclass
class LPSolution:
    times: np.ndarray
    gamma: np.ndarray  # (batch, n_t, N)
    xi: np.ndarray  # (batch, N)
    iterations: int
    increments: list

    @property
    def ratios(self) -> np.ndarray:
        inc = np.asarray(self.increments)
        if inc.size < 2:
            return np.zeros(0)
        return inc[1:] / np.maximum(inc[:-1], 1e-300)


def solve_lp(problem: LPProblem, phases, Y, *, T: float, dt: float, tol: float,
             max_iter: int = 200, guess=None) -> LPSolution:
    """Picard iteration for a batch of (fiber, center value) pairs.

    phases: (batch, m) or (m,) fiber phases; Y: (batch, n_center) center coefficients.
    Convergence is measured in sup_t e^{-(eta/2)|t|} ||increment(t)||_alpha.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    nb = Y.shape[0]
    P = np.asarray(phases, dtype=float)
    if P.ndim == 1:
        P = np.broadcast_to(P, (nb, P.size))
    n = int(math.ceil(T / dt - 1e-12))
    h = T / n
    t = h * np.arange(-n, n + 1)
    i0 = n
    theta = P[:, None, :] + problem.frequencies * t[:, None]
    decay = np.exp(-0.5 * problem.eta * np.abs(t))
    d = problem.rates

    base = np.zeros((nb, t.size, problem.dim))
    for j, c in enumerate(problem.center):
        base[:, :, c] = np.exp(-d[c] * t)[None, :] * Y[:, j][:, None]
    gam = base.copy() if guess is None else np.array(guess, dtype=float)
    if gam.shape != base.shape:
        raise ValueError("initial guess has the wrong shape")
    gam[:, :, problem.center] = base[:, :, problem.center]

    if problem.M_rho is not None and 0 < problem.M_rho < 1:
        cap = None  # set after the first increment
    else:
        cap = max_iter
    incs = []
    it = 0
    while True:
        G = problem.field(theta, gam)
        new = np.empty_like(gam)
        for c in problem.center:
            fwd = _forward_integral(G[:, :, c], d[c], h, i0)
            bwd = _backward_integral(G[:, :, c], d[c], h, i0)
            new[:, :, c] = base[:, :, c] + fwd - bwd
        for s in problem.stable:
            new[:, :, s] = _forward_integral(G[:, :, s], d[s], h, 0)
        for u in problem.unstable:
            new[:, :, u] = -_backward_integral(G[:, :, u], d[u], h, t.size - 1)
        inc = float(np.max(problem.norm(new - gam) * decay))
        gam = new
        it += 1
        incs.append(inc)
        if inc < tol:
            break
        if cap is None:
            cap = int(math.ceil(math.log(tol / max(inc, tol)) / math.log(problem.M_rho))) + 20
            cap = max(cap, 20)
        if it >= cap:
            raise NonContractionError(
                f"Picard iteration did not reach tol={tol:g} in {it} steps (last increment {inc:.3g})"
            )
    xi = gam[:, i0, :].copy()
    xi[:, problem.center] = 0.0
    return LPSolution(t, gam, xi, it, incs)


@dataclass
class ManifoldGraph:
    """Graph xi over a uniform grid of center coefficients on one fiber."""

    lam: float
    hull_point: HullPoint
    radius: float
    grid: np.ndarray
    values: np.ndarray
    center: int
    weights: np.ndarray
    T_horizon: float
    dt: float
    tol: float
    rho: float = float("nan")
    k_rho: float = float("nan")
    M_rho: float = float("nan")
    L1_emp: float = float("nan")
    L2_emp: float = float("nan")
    iterations: int = 0
    max_ratio: float = float("nan")
    certified: bool = False

    @property
    def L1_bound(self) -> float:
        if not (self.M_rho < 1):
            return float("nan")
        return 1.0 / (1.0 - self.M_rho) + 1.0

    @property
    def y_max(self) -> float:
        return float(self.grid[-1])

    def xi(self, y) -> np.ndarray:
        """Linear interpolation of xi at center coefficients y (any shape); returns (..., N)."""
        y = np.asarray(y, dtype=float)
        if np.any(np.abs(y) > self.y_max * (1 + 1e-12)):
            raise DomainError(f"center value outside graph domain |y| <= {self.y_max:.4g}")
        flat = y.reshape(-1)
        out = np.stack([np.interp(flat, self.grid, self.values[:, k]) for k in range(self.values.shape[1])], -1)
        return out.reshape(y.shape + (self.values.shape[1],))

    def point(self, y) -> np.ndarray:
        u = self.xi(y)
        u[..., self.center] = np.asarray(y, dtype=float)
        return u

    def metadata(self) -> dict:
        return {
            "lambda": self.lam, "phases": list(self.hull_point.phases), "radius": self.radius,
            "center": self.center, "weights": list(map(float, self.weights)),
            "T_horizon": self.T_horizon, "dt": self.dt, "tol": self.tol, "rho": self.rho,
            "k_rho": self.k_rho, "M_rho": self.M_rho, "L1_bound": self.L1_bound,
            "L1_emp": self.L1_emp, "L2_emp": self.L2_emp, "iterations": self.iterations,
            "max_ratio": self.max_ratio, "certified": self.certified,
        }

    def to_csv(self, path=None, extra: dict | None = None) -> str:
        buf = io.StringIO()
        meta = self.metadata()
        if extra:
            meta.update(extra)
        buf.write("# schema: manifold-graph/1\n")
        for key, val in meta.items():
            buf.write(f"# {key}: {json.dumps(val)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["y"] + [f"xi_{k + 1}" for k in range(self.values.shape[1])])
        for y, row in zip(self.grid, self.values):
            w.writerow([repr(float(y))] + [repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "ManifoldGraph":
        meta, rows = {}, []
        with open(path) as fh:
            for line in fh:
                if line.startswith("#"):
                    key, _, val = line[1:].partition(":")
                    meta[key.strip()] = val.strip()
                else:
                    rows.append(line)
        data = np.loadtxt(io.StringIO("".join(rows[1:])), delimiter=",", ndmin=2)
        m = {k: json.loads(v) for k, v in meta.items() if k != "schema"}
        return cls(
            lam=m["lambda"], hull_point=HullPoint(tuple(m["phases"])), radius=m["radius"],
            grid=data[:, 0], values=data[:, 1:], center=m["center"], weights=np.array(m["weights"]),
            T_horizon=m["T_horizon"], dt=m["dt"], tol=m["tol"], rho=m["rho"], k_rho=m["k_rho"],
            M_rho=m["M_rho"], L1_emp=m["L1_emp"], L2_emp=m["L2_emp"], iterations=m["iterations"],
            max_ratio=m["max_ratio"], certified=m["certified"],
        )


def empirical_lipschitz(grid, values, weights, center: int) -> float:
    """max over grid pairs of ||xi(y) - xi(z)||_alpha / ||y - z||_alpha."""
    if len(grid) < 2:
        return 0.0
    dy = np.abs(grid[:, None] - grid[None, :]) * weights[center]
    dxi = np.linalg.norm((values[:, None, :] - values[None, :, :]) * weights, axis=-1)
    off = ~np.eye(len(grid), dtype=bool)
    return float(np.max(dxi[off] / dy[off]))


def center_grid(radius: float, n_grid: int, weight: float) -> np.ndarray:
    if n_grid < 3 or n_grid % 2 == 0:
        raise ValueError("n_grid must be odd and >= 3 so the grid contains 0")
    return np.linspace(-radius, radius, n_grid) / weight


def build_graph(problem: LPProblem, p: HullPoint, radius: float, n_grid: int, *, T: float, dt: float,
                tol: float, lam: float = float("nan"), max_iter: int = 200, guess=None,
                companion: tuple | None = None, rho: float | None = None, auto_shrink: bool = True,
                shrink: float = 0.8, max_shrinks: int = 20) -> tuple[ManifoldGraph, LPSolution]:
    """Solve graph points over the center ball of the given alpha-norm radius.

    companion = (problem_at_other_lam, delta_lam) adds the empirical lambda-Lipschitz constant.
    rho, when given, enforces ||y + xi(y)||_alpha <= rho/2 by shrinking the radius.
    """
    if problem.center.size != 1:
        raise ValueError("graphs are tabulated for a one-dimensional center space")
    c = int(problem.center[0])
    wc = problem.weights[c]
    for _ in range(max_shrinks + 1):
        grid = center_grid(radius, n_grid, wc)
        sol = solve_lp(problem, p.array, grid[:, None], T=T, dt=dt, tol=tol, max_iter=max_iter, guess=guess)
        pts = sol.xi.copy()
        pts[:, c] = grid
        worst = float(np.max(problem.norm(pts)))
        if rho is None or worst <= rho / 2:
            break
        if not auto_shrink:
            raise CutoffActiveError(
                f"graph point with ||y + xi(y)|| = {worst:.4g} > rho/2 = {rho / 2:.4g}: shrink the grid radius"
            )
        radius *= shrink
        guess = None
    else:
        raise CutoffActiveError("could not shrink the grid radius below the cutoff region")
    L2 = float("nan")
    if companion is not None:
        other, dlam = companion
        sol2 = solve_lp(other, p.array, grid[:, None], T=T, dt=dt, tol=tol, max_iter=max_iter)
        L2 = float(np.max(problem.norm(sol2.xi - sol.xi)) / abs(dlam))
    ratios = sol.ratios
    graph = ManifoldGraph(
        lam=lam, hull_point=p, radius=radius, grid=grid, values=sol.xi, center=c,
        weights=problem.weights, T_horizon=T, dt=dt, tol=tol,
        L1_emp=empirical_lipschitz(grid, sol.xi, problem.weights, c), L2_emp=L2,
        iterations=sol.iterations, max_ratio=float(ratios.max()) if ratios.size else 0.0,
    )
    return graph, sol


def _check_window(sp: SpectralSplit, lam: float, window: float):
    if not abs(lam - sp.lambda0) < window * sp.eta:
        raise OutOfWindowError(
            f"|lam - lam0| = {abs(lam - sp.lambda0):.4g} is not below {window:g}*eta = {window * sp.eta:.4g}"
        )


def build_manifold(cfg: ModelConfig, sp: SpectralSplit, tc: TruncationConfig, p: HullPoint, *,
                   radius: float, n_grid: int, lam: float | None = None, T: float | None = None,
                   dt: float = 0.01, tol: float = 1e-8, lambda_step: float | None = None,
                   max_iter: int = 200, auto_shrink: bool = True) -> ManifoldGraph:
    """Graph of the local invariant manifold of the Galerkin model at lam on fiber p."""
    lam = cfg.lam if lam is None else float(lam)
    _check_window(sp, lam, 0.125)
    k = lipschitz_constant(tc.rho, cfg)
    M = contraction_constant(tc.rho, cfg.alpha, sp.eta, cfg, check=tc.enforce_gate)
    T = default_horizon(sp.eta, tol) if T is None else T
    c_lam = cfg.with_lambda(lam)
    prob = lp_problem(c_lam, sp.at(lam), tc, M_rho=M if tc.enforce_gate else None)
    dl = sp.eta / 200 if lambda_step is None else lambda_step
    if not abs(lam + dl - sp.lambda0) < 0.125 * sp.eta:
        dl = -dl
    other = lp_problem(cfg.with_lambda(lam + dl), sp.at(lam + dl), tc, M_rho=prob.M_rho)
    graph, _ = build_graph(prob, p, radius, n_grid, T=T, dt=dt, tol=tol, lam=lam, max_iter=max_iter,
                           companion=(other, dl), rho=tc.rho, auto_shrink=auto_shrink)
    graph.rho, graph.k_rho, graph.M_rho = tc.rho, k, M
    graph.certified = bool(tc.enforce_gate and M < 1)
    return graph


@dataclass
class ManifoldAtlas:
    """Graphs on a product lattice of hull phases, interpolated multilinearly (periodic) in phase."""

    lam: float
    counts: tuple
    grid: np.ndarray  # shared center grid
    values: np.ndarray  # (n_lattice, n_grid, N), lattice in C order over counts
    center: int
    weights: np.ndarray
    frequencies: np.ndarray
    radius: float
    meta: dict = field(default_factory=dict)
    solution: LPSolution | None = None

    @property
    def y_max(self) -> float:
        return float(self.grid[-1])

    def lattice_phases(self) -> np.ndarray:
        return lattice(self.counts)

    def _phase_weights(self, phases):
        th = wrap(np.asarray(phases, dtype=float))
        counts = np.asarray(self.counts)
        x = th / TWO_PI * counts
        lo = np.floor(x).astype(int) % counts
        fr = x - np.floor(x)
        idx, wts = [], []
        for corner in np.ndindex(*([2] * len(counts))):
            c = np.asarray(corner)
            node = (lo + c) % counts
            idx.append(int(np.ravel_multi_index(tuple(node), self.counts)))
            wts.append(float(np.prod(np.where(c == 1, fr, 1 - fr))))
        return idx, wts

    def graph_values(self, phases) -> np.ndarray:
        idx, wts = self._phase_weights(phases)
        return sum(w * self.values[i] for i, w in zip(idx, wts))

    def graph(self, q: HullPoint) -> ManifoldGraph:
        return ManifoldGraph(self.lam, q, self.radius, self.grid, self.graph_values(q.array), self.center,
                             self.weights, self.meta.get("T", float("nan")), self.meta.get("dt", float("nan")),
                             self.meta.get("tol", float("nan")))

    def xi(self, phases, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if np.any(np.abs(y) > self.y_max * (1 + 1e-12)):
            raise DomainError(f"center value outside graph domain |y| <= {self.y_max:.4g}")
        vals = self.graph_values(phases)
        flat = y.reshape(-1)
        out = np.stack([np.interp(flat, self.grid, vals[:, k]) for k in range(vals.shape[1])], -1)
        return out.reshape(y.shape + (vals.shape[1],))

    def point(self, phases, y) -> np.ndarray:
        u = self.xi(phases, y)
        u[..., self.center] = np.asarray(y, dtype=float)
        return u


def lattice(counts) -> np.ndarray:
    ticks = [TWO_PI * np.arange(k) / k for k in counts]
    return np.stack(np.meshgrid(*ticks, indexing="ij"), -1).reshape(-1, len(counts))


def build_atlas(problem: LPProblem, counts: Sequence[int], radius: float, n_grid: int, *, T: float,
                dt: float, tol: float, lam: float = float("nan"), max_iter: int = 200,
                warm: ManifoldAtlas | None = None) -> ManifoldAtlas:
    """Graphs on every lattice fiber, solved as one batch."""
    if problem.center.size != 1:
        raise ValueError("atlases are tabulated for a one-dimensional center space")
    counts = tuple(int(k) for k in counts)
    if len(counts) != problem.frequencies.size:
        raise ValueError("one lattice count per forcing frequency")
    c = int(problem.center[0])
    grid = center_grid(radius, n_grid, problem.weights[c])
    nodes = lattice(counts)
    P = np.repeat(nodes, n_grid, axis=0)
    Y = np.tile(grid, len(nodes))[:, None]
    guess = None
    if warm is not None and warm.solution is not None and warm.solution.gamma.shape[0] == P.shape[0]:
        if warm.counts == counts and np.allclose(warm.grid, grid) and warm.meta.get("T") == T \
                and warm.meta.get("dt") == dt:
            guess = warm.solution.gamma
    sol = solve_lp(problem, P, Y, T=T, dt=dt, tol=tol, max_iter=max_iter, guess=guess)
    values = sol.xi.reshape(len(nodes), n_grid, problem.dim)
    ratios = sol.ratios
    meta = {"T": T, "dt": dt, "tol": tol, "iterations": sol.iterations,
            "max_ratio": float(ratios.max()) if ratios.size else 0.0,
            "first_ratio": float(ratios[0]) if ratios.size else 0.0}
    return ManifoldAtlas(lam, counts, grid, values, c, problem.weights, problem.frequencies, radius, meta, sol)


def manifold_invariance_residual(source, target, y, t: float, system: SemilinearSystem, icfg, *,
                                 p: HullPoint | None = None) -> float:
    """||Pi_{+-} u(t) - xi_target(Pi_c u(t))||_alpha for u(0) = y + xi_source(y).

    source and target are ManifoldGraph objects on fibers p and theta_t p
    (for autonomous forcing the same graph may serve as both).
    """
    from .cocycle import evolve

    p = source.hull_point if p is None else p
    u0 = source.point(np.asarray(y, dtype=float))
    ut = evolve(p, u0, t, system, icfg)
    yc = ut[..., source.center]
    if np.any(np.abs(yc) > target.y_max):
        raise DomainError("evolved center component left the graph domain")
    diff = ut - target.point(yc)
    return float(np.max(np.linalg.norm(diff * source.weights, axis=-1)))
