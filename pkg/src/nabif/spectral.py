"""Center / stable / unstable splitting of the diagonal operator A - lam near lam0 = mu_k."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .galerkin import ModelConfig, spectrum

SECTORS = ("c", "+", "-", "+-")


class SpectralConfigError(ValueError):
    pass


class OutOfWindowError(ValueError):
    pass


@dataclass(frozen=True)
class SpectralSplit:
    """Index sets are 0-based positions in the coefficient vector (mode k sits at k-1)."""

    lambda0: float
    lam: float
    eta: float
    mu: tuple
    center_idx: tuple
    stable_idx: tuple
    unstable_idx: tuple

    @property
    def rates(self) -> np.ndarray:
        """Diagonal of A^lam = A - lam."""
        return np.asarray(self.mu) - self.lam

    @property
    def n(self) -> int:
        return len(self.mu)

    def mask(self, sector: str) -> np.ndarray:
        if sector not in SECTORS:
            raise ValueError(f"sector must be one of {SECTORS}")
        m = np.zeros(self.n, dtype=bool)
        if sector == "c":
            m[list(self.center_idx)] = True
        if sector in ("+", "+-"):
            m[list(self.stable_idx)] = True
        if sector in ("-", "+-"):
            m[list(self.unstable_idx)] = True
        return m

    def at(self, lam: float, window: float = 0.25) -> "SpectralSplit":
        """Same lam0 at another lam (checked against the window)."""
        return _build(np.asarray(self.mu), self.lambda0, lam, window)


def _build(mu: np.ndarray, lambda0: float, lam: float, window: float) -> SpectralSplit:
    hit = np.flatnonzero(np.isclose(mu, lambda0, rtol=1e-12, atol=1e-12))
    if hit.size == 0:
        raise SpectralConfigError(f"lambda0={lambda0} is not an eigenvalue of the model")
    others = np.delete(mu, hit)
    if others.size == 0:
        raise SpectralConfigError("need at least one non-center mode")
    eta = float(np.min(np.abs(others - lambda0)))
    if not abs(lam - lambda0) < window * eta:
        raise OutOfWindowError(
            f"|lam - lam0| = {abs(lam - lambda0):.4g} is not below {window:g}*eta = {window * eta:.4g}"
        )
    idx = np.arange(mu.size)
    rest = np.setdiff1d(idx, hit)
    stable = tuple(int(i) for i in rest if mu[i] - lam > 0)
    unstable = tuple(int(i) for i in rest if mu[i] - lam < 0)
    return SpectralSplit(float(mu[hit[0]]), float(lam), eta, tuple(float(v) for v in mu),
                         tuple(int(i) for i in hit), stable, unstable)


def split(cfg: ModelConfig, lambda0: float | None = None, *, k: int | None = None,
          window: float = 0.25) -> SpectralSplit:
    """Split at lam0 (given directly or as the k-th eigenvalue, 1-based) for cfg.lam."""
    mu = spectrum(cfg)
    if (lambda0 is None) == (k is None):
        raise ValueError("give exactly one of lambda0 or k")
    if k is not None:
        if not 1 <= k <= mu.size:
            raise SpectralConfigError(f"k={k} outside 1..{mu.size}")
        lambda0 = float(mu[k - 1])
    return _build(mu, float(lambda0), cfg.lam, window)


def project(u, sp: SpectralSplit, sector: str) -> np.ndarray:
    """Pi_sector u along the last axis."""
    u = np.asarray(u, dtype=float)
    return np.where(sp.mask(sector), u, 0.0)


@dataclass
class BoundEntry:
    family: str
    quantity: str
    t: float
    norm: float
    bound: float

    @property
    def slack(self) -> float:
        return self.bound - self.norm

    @property
    def ratio(self) -> float:
        if self.bound == 0:
            return 0.0 if self.norm == 0 else np.inf
        return self.norm / self.bound


@dataclass
class SemigroupReport:
    lam: float
    alpha: float
    entries: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.slack >= 0 for e in self.entries)

    @property
    def worst(self) -> BoundEntry | None:
        return min(self.entries, key=lambda e: e.slack / max(e.bound, 1e-300), default=None)

    @property
    def min_constant(self) -> float:
        """Smallest C with norm <= C * bound on every tested (family, t)."""
        return max((e.ratio for e in self.entries), default=0.0)

    def by_family(self) -> dict:
        out = {}
        for e in self.entries:
            key = (e.family, e.quantity)
            out[key] = min(out.get(key, np.inf), e.slack)
        return out

    def summary(self) -> str:
        lines = [f"semigroup bounds at lam={self.lam:g}, alpha={self.alpha:g}: "
                 f"{'pass' if self.passed else 'FAIL'}, minimal constant {self.min_constant:.4f}"]
        for (fam, q), s in sorted(self.by_family().items()):
            lines.append(f"  {fam} {q}: worst slack {s:.3e}")
        return "\n".join(lines)


def semigroup_bound_check(sp: SpectralSplit, alpha: float, t_grid) -> SemigroupReport:
    """Exact mode-wise operator norms against the exponential-dichotomy bounds.

    unstable (t <= 0): |A^a e^{-A_- t}| <= e^{(3eta/4) t},  |e^{-A_- t}| <= e^{(3eta/4) t}
    stable   (t > 0):  |A^a e^{-A_+ t}| <= t^-a e^{-(3eta/4) t},  |A^a e^{-A_+ t} A^-a| <= e^{-(3eta/4) t}
    center   (all t):  |A^a e^{-A_c t}| <= e^{(eta/4)|t|},  |e^{-A_c t}| <= e^{(eta/4)|t|}
    """
    if not abs(sp.lam - sp.lambda0) < sp.eta / 4:
        raise OutOfWindowError("semigroup bounds need |lam - lam0| < eta/4")
    mu = np.asarray(sp.mu)
    d = sp.rates
    eta = sp.eta
    rep = SemigroupReport(sp.lam, alpha)

    def norm(idx, t, weighted):
        if not idx:
            return None
        i = list(idx)
        g = np.exp(-d[i] * t)
        if weighted:
            g = g * mu[i] ** alpha
        return float(np.max(g))

    for t in map(float, t_grid):
        if t <= 0:
            for q, wtd in (("A^a e^{-At}", True), ("e^{-At}", False)):
                n = norm(sp.unstable_idx, t, wtd)
                if n is not None:
                    rep.entries.append(BoundEntry("unstable", q, t, n, float(np.exp(0.75 * eta * t))))
        if t > 0:
            n = norm(sp.stable_idx, t, True)
            if n is not None:
                rep.entries.append(BoundEntry("stable", "A^a e^{-At}", t, n,
                                              float(t ** -alpha * np.exp(-0.75 * eta * t))))
                n = norm(sp.stable_idx, t, False)
                rep.entries.append(BoundEntry("stable", "A^a e^{-At} A^-a", t, n,
                                              float(np.exp(-0.75 * eta * t))))
        for q, wtd in (("A^a e^{-At}", True), ("e^{-At}", False)):
            n = norm(sp.center_idx, t, wtd)
            rep.entries.append(BoundEntry("center", q, t, n, float(np.exp(0.25 * eta * abs(t)))))
    return rep
