"""Sine-Galerkin model of u_t - u_xx = lam*u +/- h(t) u^3 on (0, L) with Dirichlet ends.

States are coefficient vectors a with u = sum_k a_k e_k, e_k = sqrt(2/L) sin(k pi x / L).
The cubic is projected by collocation on M = 4N interior points; the
trapezoid rule on the sine grid is exact for the resulting trigonometric
polynomial, so there is no aliasing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .hull import Forcing, HullPoint


@dataclass(frozen=True)
class ModelConfig:
    L: float = math.pi
    n_modes: int = 8
    lam: float = 0.9
    alpha: float = 0.5
    forcing: Forcing = field(default_factory=Forcing)

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("domain length L must be positive")
        if int(self.n_modes) != self.n_modes or self.n_modes < 2:
            raise ValueError("n_modes must be an integer >= 2")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")

    def with_lambda(self, lam: float) -> "ModelConfig":
        return ModelConfig(self.L, self.n_modes, float(lam), self.alpha, self.forcing)

    def with_forcing(self, forcing: Forcing) -> "ModelConfig":
        return ModelConfig(self.L, self.n_modes, self.lam, self.alpha, forcing)


def dirichlet_eigenvalues(L: float, n: int) -> np.ndarray:
    k = np.arange(1, n + 1)
    return (k * math.pi / L) ** 2


def spectrum(cfg: ModelConfig) -> np.ndarray:
    """Eigenvalues mu_k of A = -d^2/dx^2, k = 1..N."""
    return dirichlet_eigenvalues(cfg.L, cfg.n_modes)


def norm_weights(cfg: ModelConfig, alpha: float | None = None) -> np.ndarray:
    """mu_k^alpha, so that ||u||_alpha = ||weights * a||_2."""
    a = cfg.alpha if alpha is None else alpha
    return spectrum(cfg) ** a


def fractional_norm(u, alpha: float, cfg: ModelConfig) -> np.ndarray:
    """||A^alpha u||_{L^2} along the last axis."""
    u = np.asarray(u, dtype=float)
    return np.linalg.norm(u * norm_weights(cfg, alpha), axis=-1)


@lru_cache(maxsize=32)
def collocation(L: float, n: int, points: int | None = None):
    """Interior grid x_j, basis matrix E[j, k] = e_k(x_j) and quadrature weight."""
    M = 4 * n if points is None else points
    x = L * np.arange(1, M + 1) / (M + 1)
    E = math.sqrt(2.0 / L) * np.sin(np.outer(x, np.arange(1, n + 1)) * math.pi / L)
    E.setflags(write=False)
    return x, E, L / (M + 1)


def to_grid(u, L: float, points: int | None = None) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    _, E, _ = collocation(L, u.shape[-1], points)
    return u @ E.T


def cubic_projection(u, L: float, points: int | None = None) -> np.ndarray:
    """Galerkin projection of u^3 onto the first N modes."""
    u = np.asarray(u, dtype=float)
    _, E, w = collocation(L, u.shape[-1], points)
    g = u @ E.T
    return w * (g * g * g) @ E


def quartic_integral(u, L: float) -> np.ndarray:
    """kappa(u) = int u^4 dx, exact on the collocation grid."""
    u = np.asarray(u, dtype=float)
    _, E, w = collocation(L, u.shape[-1], None)
    g = u @ E.T
    return w * np.sum(g ** 4, axis=-1)


def raw_nonlinearity(phases, u, cfg: ModelConfig) -> np.ndarray:
    """sign * h(phases) * P_N(u^3); phases (..., m) broadcast against u (..., N)."""
    f = cfg.forcing
    u = np.asarray(u, dtype=float)
    if f.sign == 0:
        return np.zeros_like(u)
    h = f.amplitude(phases)
    return f.sign * np.asarray(h)[..., None] * cubic_projection(u, cfg.L)


def nonlinearity_modal(t: float, p: HullPoint, u, cfg: ModelConfig) -> np.ndarray:
    """Modal coefficients of +/- h(theta_t p) u^3."""
    phases = p.array + np.asarray(cfg.forcing.frequencies) * t
    return raw_nonlinearity(phases, u, cfg)


@dataclass
class F1Report:
    passed: bool
    worst_margin: float
    margins: np.ndarray  # (n_samples, n_phases)
    offending: list  # (sample index, phase index) pairs

    def summary(self) -> str:
        state = "pass" if self.passed else f"FAIL at {self.offending[:5]}"
        return f"F1 check: {state}; worst margin {self.worst_margin:.3e}"


def check_F1(cfg: ModelConfig, sample_states, phase_grid) -> F1Report:
    """Check the sign condition (f(t,u), u) <= -delta*kappa(u) (sign -1) or >= +delta*kappa(u) (sign +1).

    The margin is oriented so that a nonnegative value means the inequality
    holds; rounding is absorbed by a tolerance relative to kappa.
    """
    f = cfg.forcing
    if f.sign not in (-1, 1):
        raise ValueError("the sign condition needs sign = +1 or -1")
    U = np.atleast_2d(np.asarray(sample_states, dtype=float))
    phases = np.array([q.array for q in phase_grid])
    h = f.amplitude(phases)  # (n_phases,)
    kappa = quartic_integral(U, cfg.L)  # (n_samples,)
    inner = np.sum(cubic_projection(U, cfg.L) * U, axis=-1)  # = kappa up to rounding
    pairing = f.sign * np.outer(inner, h)
    if f.sign < 0:
        margins = -f.delta * kappa[:, None] - pairing
    else:
        margins = pairing - f.delta * kappa[:, None]
    slack = 1e-12 * np.maximum(kappa[:, None] * f.h_max, 1e-300)
    bad = np.argwhere(margins < -slack)
    return F1Report(
        passed=bad.size == 0,
        worst_margin=float(margins.min()) if margins.size else 0.0,
        margins=margins,
        offending=[tuple(int(i) for i in row) for row in bad],
    )
