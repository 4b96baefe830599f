"""Phase-torus representation of the hull of a (quasi)periodic forcing.

A point of the hull is a vector of phases; the translation flow rotates
every phase at its own frequency.  Forcing amplitudes are evaluated from the
phases, so the hull never has to be built as a set of functions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap(phases):
    """Reduce angles to [0, 2pi)."""
    out = np.mod(np.asarray(phases, dtype=float), TWO_PI)
    # mod of a tiny negative number rounds up to exactly 2pi
    return np.where(out >= TWO_PI, 0.0, out)


@dataclass(frozen=True)
class HullPoint:
    phases: tuple

    def __post_init__(self):
        arr = np.atleast_1d(np.asarray(self.phases, dtype=float))
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("a hull point needs at least one phase")
        if not np.all(np.isfinite(arr)):
            raise ValueError("hull phases must be finite")
        object.__setattr__(self, "phases", tuple(float(v) for v in wrap(arr)))

    @property
    def dim(self) -> int:
        return len(self.phases)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.phases)

    @classmethod
    def origin(cls, m: int = 1) -> "HullPoint":
        return cls((0.0,) * m)


def translate(p: HullPoint, t: float, frequencies: Sequence[float]) -> HullPoint:
    """theta_t p: advance each phase by omega_i * t."""
    w = np.asarray(frequencies, dtype=float)
    if w.shape != (p.dim,):
        raise ValueError(f"expected {p.dim} frequencies, got {w.shape}")
    return HullPoint(tuple(p.array + w * t))


def torus_distance(p: HullPoint, q: HullPoint) -> float:
    """Flat max-metric on the torus."""
    d = np.abs(p.array - q.array)
    return float(np.max(np.minimum(d, TWO_PI - d)))


def _two_plus_sin(theta, c):
    return c[0] + c[1] * np.sin(theta[..., 0])


def _quasi_two_freq(theta, c):
    return c[0] + c[1] * np.sin(theta[..., 0]) + c[2] * np.sin(theta[..., 1])


def _constant(theta, c):
    return np.full(theta.shape[:-1], float(c[0]))


# name -> (callable, phase count (None = any), default coefficients)
SYMBOLS = {
    "two_plus_sin": (_two_plus_sin, 1, (2.0, 1.0)),
    "quasi_two_freq": (_quasi_two_freq, 2, (2.0, 0.5, 0.5)),
    "constant": (_constant, None, (2.0,)),
}


@dataclass(frozen=True)
class Forcing:
    """Amplitude h(theta) >= delta > 0 with frequencies omega and the sign of the cubic.

    sign = 0 switches the cubic off (the linear configuration).
    """

    frequencies: tuple = (1.0,)
    symbol: str = "two_plus_sin"
    coeffs: tuple | None = None
    delta: float = 1.0
    sign: int = -1

    def __post_init__(self):
        w = tuple(float(v) for v in np.atleast_1d(self.frequencies))
        object.__setattr__(self, "frequencies", w)
        if self.symbol not in SYMBOLS:
            raise ValueError(f"unknown forcing symbol {self.symbol!r}; choose from {sorted(SYMBOLS)}")
        fn, m, default = SYMBOLS[self.symbol]
        coeffs = default if self.coeffs is None else tuple(float(c) for c in self.coeffs)
        if len(coeffs) != len(default):
            raise ValueError(f"symbol {self.symbol!r} takes {len(default)} coefficients")
        object.__setattr__(self, "coeffs", coeffs)
        if m is not None and len(w) != m:
            raise ValueError(f"symbol {self.symbol!r} needs {m} frequencies, got {len(w)}")
        if not w or any(v <= 0 for v in w):
            raise ValueError("frequencies must be positive")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.sign not in (-1, 0, 1):
            raise ValueError("sign must be -1, 0 or +1")
        if self.h_min < self.delta * (1 - 1e-12):
            raise ValueError(f"amplitude lower bound {self.h_min} is below delta={self.delta}")

    @property
    def m(self) -> int:
        return len(self.frequencies)

    @property
    def h_min(self) -> float:
        c = self.coeffs
        return c[0] - sum(abs(v) for v in c[1:])

    @property
    def h_max(self) -> float:
        c = self.coeffs
        return c[0] + sum(abs(v) for v in c[1:])

    def amplitude(self, phases) -> np.ndarray:
        """h at phases of shape (..., m); returns shape (...)."""
        theta = np.asarray(phases, dtype=float)
        return SYMBOLS[self.symbol][0](theta, self.coeffs)

    def sine_form(self) -> tuple[float, np.ndarray]:
        """(c0, c) with h(theta) = c0 + sum_i c_i sin(theta_i); every built-in symbol has this form."""
        c = self.coeffs
        if self.symbol == "constant":
            return c[0], np.zeros(self.m)
        return c[0], np.asarray(c[1:], dtype=float)

    def translate(self, p: HullPoint, t: float) -> HullPoint:
        return translate(p, t, self.frequencies)


def evaluate_forcing(f: Forcing, p: HullPoint, t: float) -> float:
    """h(theta_t p)."""
    return float(f.amplitude(p.array + np.asarray(f.frequencies) * t))


def _korobov_generator(n: int, m: int) -> np.ndarray:
    # rank-1 lattice generator (1, g, g^2, ...) picked to spread the points;
    # a brute-force search is cheap for the sizes used here
    best, best_score = 1, -1.0
    for g in range(1, n):
        z = np.array([pow(g, j, n) for j in range(m)])
        pts = (np.outer(np.arange(1, n), z) % n) / n
        d = np.minimum(pts, 1 - pts).max(axis=1).min()
        if d > best_score:
            best, best_score = g, d
    return np.array([pow(best, j, n) for j in range(m)])


def sample_hull(m: int, n: int) -> list[HullPoint]:
    """n deterministic, evenly spread points of the m-torus."""
    if m < 1:
        raise ValueError("torus dimension must be >= 1")
    if n <= 0:
        raise ValueError("empty hull sample: n must be >= 1")
    k = round(n ** (1.0 / m))
    if k ** m == n:
        ticks = TWO_PI * np.arange(k) / k
        grid = np.stack(np.meshgrid(*([ticks] * m), indexing="ij"), axis=-1).reshape(-1, m)
    else:
        z = _korobov_generator(n, m)
        grid = TWO_PI * ((np.outer(np.arange(n), z) % n) / n)
    return [HullPoint(tuple(row)) for row in grid]
