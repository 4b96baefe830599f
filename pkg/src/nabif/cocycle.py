"""Exponential time differencing for diagonal semilinear systems driven by the hull.

A system is u' = -d * u + g(theta, u) with a diagonal linear part.  The
solution operator phi(t, p) always integrates forward in time; pullback
quantities are obtained by starting from the shifted fiber theta_{-t} p.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .galerkin import ModelConfig, norm_weights, raw_nonlinearity, spectrum
from .hull import Forcing, HullPoint, translate

SCHEME_ORDER = {"etd1": 1, "etd2": 2, "etd4": 4}


class DivergenceError(RuntimeError):
    """State norm crossed the blow-up threshold (or became non-finite)."""

    def __init__(self, time: float, norm: float, path=None):
        super().__init__(f"trajectory diverged at t={time:.6g} (norm {norm:.3g})")
        self.time = time
        self.norm = norm
        self.path = path


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-2
    scheme: str = "etd2"
    blowup_threshold: float = 1e6

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.blowup_threshold > 0:
            raise ValueError("blowup_threshold must be positive")
        if self.scheme not in SCHEME_ORDER:
            raise ValueError(f"scheme must be one of {sorted(SCHEME_ORDER)}")

    @property
    def order(self) -> int:
        return SCHEME_ORDER[self.scheme]


@dataclass(eq=False)
class SemilinearSystem:
    """u' = -rates * u + field(phases, u) with phases = p + frequencies * t."""

    rates: np.ndarray
    frequencies: np.ndarray
    weights: np.ndarray
    field: Callable

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=float)
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)

    @property
    def dim(self) -> int:
        return self.rates.size

    def norm(self, U) -> np.ndarray:
        return np.linalg.norm(np.asarray(U) * self.weights, axis=-1)

    def phases(self, p: HullPoint, t):
        return p.array + self.frequencies * np.asarray(t, dtype=float)[..., None]


def galerkin_system(cfg: ModelConfig, envelope: Callable | None = None) -> SemilinearSystem:
    """The Galerkin model as a semilinear system; envelope(norms) optionally scales the cubic."""
    w = norm_weights(cfg)

    if envelope is None:
        def fld(phases, U):
            return raw_nonlinearity(phases, U, cfg)
    else:
        def fld(phases, U):
            chi = envelope(np.linalg.norm(U * w, axis=-1))
            return chi[..., None] * raw_nonlinearity(phases, U, cfg)

    return SemilinearSystem(spectrum(cfg) - cfg.lam, cfg.forcing.frequencies, w, fld)


def scalar_cubic_system(rate: float = 3.0, forcing: Forcing | None = None) -> SemilinearSystem:
    """x' = -rate*x + sign*h(theta_t p)*x^3; the defaults give x' = -3x + (2 + sin t) x^3."""
    f = forcing if forcing is not None else Forcing(sign=1)

    def fld(phases, U):
        return f.sign * np.asarray(f.amplitude(phases))[..., None] * U ** 3

    return SemilinearSystem(np.array([rate]), f.frequencies, np.ones(1), fld)


def linear_system(rates, frequencies=(1.0,), weights=None) -> SemilinearSystem:
    rates = np.asarray(rates, dtype=float)
    w = np.ones_like(rates) if weights is None else weights
    return SemilinearSystem(rates, frequencies, w, lambda phases, U: np.zeros_like(U))


def phi_functions(z, kmax: int = 3):
    """phi_1..phi_kmax of z elementwise; Taylor series where |z| < 1 to avoid cancellation."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1.0
    zs = np.where(small, z, 0.0)
    zb = np.where(small, 1.0, z)
    out = []
    e = np.exp(zb)
    prev_big = e  # phi_0
    for k in range(1, kmax + 1):
        series = np.zeros_like(zs)
        term = np.full_like(zs, 1.0 / math.factorial(k))
        for j in range(30):
            series = series + term
            term = term * zs / (j + k + 1)
        big = (prev_big - 1.0 / math.factorial(k - 1)) / zb
        out.append(np.where(small, series, big))
        prev_big = big
    return out


class _Stepper:
    """One ETD step of size h for a fixed system."""

    def __init__(self, system: SemilinearSystem, h: float, scheme: str):
        self.sys = system
        self.h = h
        self.scheme = scheme
        z = -system.rates * h
        self.E = np.exp(z)
        self.E2 = np.exp(z / 2)
        p1, p2, p3 = phi_functions(z)
        if scheme == "etd1":
            self.a = h * p1
        elif scheme == "etd2":
            self.a = h * p1
            self.b = h * p2
        else:
            q1, _, _ = phi_functions(z / 2)
            self.half = 0.5 * h * q1
            self.f1 = h * (p1 - 3 * p2 + 4 * p3)
            self.f2 = h * (p2 - 2 * p3)
            self.f3 = h * (4 * p3 - p2)

    def __call__(self, base: np.ndarray, t: float, U: np.ndarray) -> np.ndarray:
        g = self.sys.field
        w = self.sys.frequencies
        h = self.h
        N0 = g(base + w * t, U)
        if self.scheme == "etd1":
            return self.E * U + self.a * N0
        if self.scheme == "etd2":
            A = self.E * U + self.a * N0
            return A + self.b * (g(base + w * (t + h), A) - N0)
        mid = base + w * (t + h / 2)
        a = self.E2 * U + self.half * N0
        Na = g(mid, a)
        b = self.E2 * U + self.half * Na
        Nb = g(mid, b)
        c = self.E2 * a + self.half * (2 * Nb - N0)
        Nc = g(base + w * (t + h), c)
        return self.E * U + self.f1 * N0 + 2 * self.f2 * (Na + Nb) + self.f3 * Nc


def _grid(t: float, dt: float) -> tuple[int, float]:
    if t < 0:
        raise ValueError("the cocycle only evolves forward: t must be >= 0")
    n = int(math.ceil(t / dt - 1e-12)) if t > 0 else 0
    return n, (t / n if n else 0.0)


def evolve(p: HullPoint, x0, t: float, system: SemilinearSystem, icfg: IntegratorConfig) -> np.ndarray:
    """phi(t, p) x0.  Raises DivergenceError on blow-up."""
    U = np.array(x0, dtype=float)
    n, h = _grid(t, icfg.dt)
    if n == 0:
        return U
    step = _Stepper(system, h, icfg.scheme)
    base = p.array
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n):
            U = step(base, i * h, U)
            nrm = float(np.max(system.norm(U)))
            if not nrm <= icfg.blowup_threshold:
                raise DivergenceError((i + 1) * h, nrm)
    return U


def evolve_cloud(p: HullPoint, X, t: float, system: SemilinearSystem, icfg: IntegratorConfig):
    """Evolve every row of X; rows that blow up are returned as +inf.

    Returns (states, diverged_mask).
    """
    X = np.array(X, dtype=float, ndmin=2)
    n, h = _grid(t, icfg.dt)
    dead = ~np.all(np.isfinite(X), axis=1)
    X[dead] = np.inf
    if n == 0:
        return X, dead
    step = _Stepper(system, h, icfg.scheme)
    base = p.array
    alive = np.flatnonzero(~dead)
    Y = X[alive]
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n):
            if alive.size == 0:
                break
            Y = step(base, i * h, Y)
            nrm = system.norm(Y)
            ok = nrm <= icfg.blowup_threshold
            if not ok.all():
                X[alive[~ok]] = np.inf
                dead[alive[~ok]] = True
                alive, Y = alive[ok], Y[ok]
    X[alive] = Y
    return X, dead


def trajectory(p: HullPoint, x0, t: float, system: SemilinearSystem, icfg: IntegratorConfig):
    """All integrator steps: (times, states).  DivergenceError carries the partial path."""
    U = np.array(x0, dtype=float)
    n, h = _grid(t, icfg.dt)
    times = h * np.arange(n + 1) if n else np.zeros(1)
    path = np.empty((n + 1,) + U.shape)
    path[0] = U
    if n == 0:
        return times, path
    step = _Stepper(system, h, icfg.scheme)
    base = p.array
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n):
            U = step(base, i * h, U)
            path[i + 1] = U
            nrm = float(np.max(system.norm(U)))
            if not nrm <= icfg.blowup_threshold:
                raise DivergenceError((i + 1) * h, nrm, (times[: i + 2], path[: i + 2]))
    return times, path


def skew_evolve(t: float, pair, system: SemilinearSystem, icfg: IntegratorConfig):
    """Skew-product semiflow (p, x) -> (theta_t p, phi(t, p) x)."""
    p, x = pair
    return translate(p, t, system.frequencies), evolve(p, x, t, system, icfg)


def cocycle_residual(t: float, s: float, p: HullPoint, x, system: SemilinearSystem,
                     icfg: IntegratorConfig) -> float:
    """||phi(s+t, p)x - phi(t, theta_s p) phi(s, p) x||_alpha."""
    direct = evolve(p, x, s + t, system, icfg)
    mid = evolve(p, x, s, system, icfg)
    composed = evolve(translate(p, s, system.frequencies), mid, t, system, icfg)
    return float(system.norm(direct - composed))


def fit_order(dts, errors) -> float:
    """Least-squares slope of log(error) against log(dt)."""
    return float(np.polyfit(np.log(dts), np.log(errors), 1)[0])
