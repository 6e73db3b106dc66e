"""Trial design, non-centrality scale and the hypothesis family.

Two subpopulations with fractions ``p1`` and ``p2 = 1 - p1`` are randomized
1:1 to treatment and control.  Everything downstream lives in the space of
the non-centrality parameters ``(delta1, delta2)`` of the subpopulation
z-statistics, which are independent with unit variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ._normal import Phi, Phi_inv

H01, H02, H0C = "H01", "H02", "H0C"
HYPOTHESES = (H01, H02, H0C)


@dataclass(frozen=True)
class TrialDesign:
    """Trial parameters.

    ``sigma2[k][a]`` is the outcome variance in subpopulation ``k`` (0-based
    here) and arm ``a`` (0 = control, 1 = treatment).
    """

    p1: float
    sigma2: tuple = ((1.0, 1.0), (1.0, 1.0))
    n: float = 1.0
    delta_min: float = 1.0
    alpha: float = 0.05
    beta: float = 0.1

    def __post_init__(self):
        sig = tuple(tuple(float(v) for v in row) for row in self.sigma2)
        object.__setattr__(self, "sigma2", sig)
        if not 0.0 < self.p1 < 1.0:
            raise ValueError(f"p1 must lie in (0, 1), got {self.p1}")
        if len(sig) != 2 or any(len(row) != 2 for row in sig):
            raise ValueError("sigma2 must be a 2x2 nested sequence")
        if any(v <= 0 for row in sig for v in row):
            raise ValueError("all variances must be positive")
        if self.n <= 0:
            raise ValueError("n must be positive")
        if self.delta_min <= 0:
            raise ValueError("delta_min must be positive")
        if not 0.0 < self.alpha < 0.5:
            raise ValueError("alpha must lie in (0, 0.5)")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")

    @property
    def p2(self) -> float:
        return 1.0 - self.p1

    @property
    def p(self) -> tuple[float, float]:
        return (self.p1, self.p2)

    def arm_sizes(self) -> tuple[tuple[float, float], tuple[float, float]]:
        """n_ka = p_k n / 2 for every subpopulation and arm."""
        return tuple((pk * self.n / 2.0, pk * self.n / 2.0) for pk in self.p)

    def with_n(self, n: float) -> "TrialDesign":
        return replace(self, n=float(n))

    def scale(self) -> "DerivedScale":
        return derived_scale(self)


@dataclass(frozen=True)
class DerivedScale:
    v1: float
    v2: float
    rho1: float
    rho2: float
    delta1_min: float
    delta2_min: float
    alpha: float = 0.05
    beta: float = 0.1

    @property
    def rho(self) -> tuple[float, float]:
        return (self.rho1, self.rho2)

    @property
    def delta_min(self) -> tuple[float, float]:
        return (self.delta1_min, self.delta2_min)

    def delta_c(self, delta1, delta2):
        return self.rho1 * np.asarray(delta1) + self.rho2 * np.asarray(delta2)

    @classmethod
    def from_rho(cls, rho1: float, delta1_min: float, delta2_min: float,
                 alpha: float = 0.05, beta: float = 0.1) -> "DerivedScale":
        """Scale built directly from the correlation (no design needed)."""
        rho2 = math.sqrt(1.0 - rho1 * rho1)
        return cls(1.0, 1.0, rho1, rho2, delta1_min, delta2_min, alpha, beta)


def derived_scale(design: TrialDesign) -> DerivedScale:
    sizes = design.arm_sizes()
    v = [design.sigma2[k][1] / sizes[k][1] + design.sigma2[k][0] / sizes[k][0] for k in range(2)]
    p1, p2 = design.p
    denom = p1 * p1 * v[0] + p2 * p2 * v[1]
    rho1 = math.sqrt(p1 * p1 * v[0] / denom)
    rho2 = math.sqrt(p2 * p2 * v[1] / denom)
    d1 = design.delta_min / math.sqrt(v[0])
    d2 = design.delta_min / math.sqrt(v[1])
    return DerivedScale(v[0], v[1], rho1, rho2, d1, d2, design.alpha, design.beta)


def non_centrality(design: TrialDesign, Delta1: float, Delta2: float) -> tuple[float, float]:
    """Map average treatment effects to z-statistic means."""
    s = derived_scale(design)
    return Delta1 / math.sqrt(s.v1), Delta2 / math.sqrt(s.v2)


@dataclass(frozen=True)
class NullSet:
    contains_H01: bool
    contains_H02: bool
    contains_H0C: bool

    def as_set(self) -> frozenset:
        flags = (self.contains_H01, self.contains_H02, self.contains_H0C)
        return frozenset(h for h, f in zip(HYPOTHESES, flags) if f)

    def __bool__(self) -> bool:
        return self.contains_H01 or self.contains_H02 or self.contains_H0C


def true_nulls(scale: DerivedScale, delta1: float, delta2: float) -> NullSet:
    # boundary points count as null (non-strict inequalities)
    return NullSet(
        bool(delta1 <= 0.0),
        bool(delta2 <= 0.0),
        bool(scale.rho1 * delta1 + scale.rho2 * delta2 <= 0.0),
    )


def ump_threshold(alpha: float) -> float:
    return float(Phi_inv(1.0 - alpha))


def ump_rejects(scale: DerivedScale, alpha: float, z1, z2):
    """UMP level-alpha test of H0C: reject iff rho1 z1 + rho2 z2 > z_{1-alpha}."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    zc = scale.rho1 * np.asarray(z1, dtype=float) + scale.rho2 * np.asarray(z2, dtype=float)
    out = zc > ump_threshold(alpha)
    return bool(out) if out.ndim == 0 else out


def ump_power(scale: DerivedScale, alpha: float, delta1: float, delta2: float) -> float:
    return float(Phi(scale.rho1 * delta1 + scale.rho2 * delta2 - ump_threshold(alpha)))


def n_min(design: TrialDesign, power: float | None = None, integer: bool = False,
          rtol: float = 1e-13) -> float:
    """Smallest n giving the UMP test of H0C the target power at (Dmin, Dmin).

    Bisection on n, using that the combined non-centrality grows like sqrt(n).
    ``design.n`` is ignored.  With ``integer=True`` the root is rounded up.
    """
    target = 1.0 - design.beta if power is None else power
    need = ump_threshold(design.alpha) + float(Phi_inv(target))

    def dc(n):
        s = derived_scale(design.with_n(n))
        return s.rho1 * s.delta1_min + s.rho2 * s.delta2_min

    lo, hi = 1e-12, 1.0
    for _ in range(400):
        if dc(hi) >= need:
            break
        lo, hi = hi, hi * 2.0
    else:
        raise RuntimeError("could not bracket n_min; check the design inputs")
    if dc(lo) >= need:
        return math.ceil(lo) if integer else lo
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if dc(mid) >= need:
            hi = mid
        else:
            lo = mid
        if hi - lo <= rtol * hi:
            break
    return float(math.ceil(hi)) if integer else hi
