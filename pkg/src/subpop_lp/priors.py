"""Mixture priors over the non-centrality parameters."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .trial import DerivedScale

SUPPORT_SDS = 8.0


@dataclass(frozen=True)
class PointMass:
    delta1: float
    delta2: float

    @property
    def mean(self) -> tuple[float, float]:
        return (self.delta1, self.delta2)

    def axis_nodes(self, axis: int, breakpoints=(), order: int = 24):
        return np.array([self.mean[axis]]), np.array([1.0])

    def support(self, axis: int) -> tuple[float, float]:
        return (self.mean[axis], self.mean[axis])


@dataclass(frozen=True)
class NormalComponent:
    """Bivariate normal with diagonal covariance diag(sd1^2, sd2^2).

    Treated as supported on mean +/- 8 sd per axis.
    """

    mean1: float
    mean2: float
    sd1: float
    sd2: float

    def __post_init__(self):
        for s in (self.sd1, self.sd2):
            if not (s > 0 and math.isfinite(s)):
                raise ValueError("normal component needs finite positive sds")

    @property
    def mean(self) -> tuple[float, float]:
        return (self.mean1, self.mean2)

    @property
    def sd(self) -> tuple[float, float]:
        return (self.sd1, self.sd2)

    def support(self, axis: int) -> tuple[float, float]:
        m, s = self.mean[axis], self.sd[axis]
        return (m - SUPPORT_SDS * s, m + SUPPORT_SDS * s)

    def axis_nodes(self, axis: int, breakpoints=(), order: int = 24):
        """Quadrature nodes/weights for the marginal density on its support.

        The support is cut at ``breakpoints`` (loss discontinuities) and into
        panels no wider than half a standard deviation, each with an
        ``order``-point Gauss-Legendre rule.
        """
        m, s = self.mean[axis], self.sd[axis]
        lo, hi = self.support(axis)
        cuts = sorted({lo, hi, *(b for b in breakpoints if lo < b < hi)})
        xg, wg = np.polynomial.legendre.leggauss(order)
        nodes, weights = [], []
        for a, b in zip(cuts[:-1], cuts[1:]):
            n_pan = max(1, int(math.ceil((b - a) / (0.5 * s))))
            edges = np.linspace(a, b, n_pan + 1)
            half = 0.5 * np.diff(edges)
            mid = 0.5 * (edges[:-1] + edges[1:])
            x = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
            w = (half[:, None] * wg[None, :]).ravel()
            dens = np.exp(-0.5 * ((x - m) / s) ** 2) / (s * math.sqrt(2 * math.pi))
            nodes.append(x)
            weights.append(w * dens)
        return np.concatenate(nodes), np.concatenate(weights)


@dataclass(frozen=True)
class Prior:
    components: tuple

    def __post_init__(self):
        comps = tuple((float(w), c) for w, c in self.components)
        object.__setattr__(self, "components", comps)
        ws = np.array([w for w, _ in comps])
        if len(comps) == 0:
            raise ValueError("prior needs at least one component")
        if np.any(ws < 0):
            raise ValueError("prior weights must be nonnegative")
        if abs(ws.sum() - 1.0) > 1e-12:
            raise ValueError(f"prior weights must sum to 1, got {ws.sum()!r}")

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.components])

    def active(self):
        """Components with positive weight."""
        return [(w, c) for w, c in self.components if w > 0]

    def is_discrete(self) -> bool:
        return all(isinstance(c, PointMass) for _, c in self.components)

    def support_box(self) -> tuple[tuple[float, float], tuple[float, float]]:
        boxes = [(c.support(0), c.support(1)) for _, c in self.active()]
        lo1 = min(b[0][0] for b in boxes)
        hi1 = max(b[0][1] for b in boxes)
        lo2 = min(b[1][0] for b in boxes)
        hi2 = max(b[1][1] for b in boxes)
        return (lo1, hi1), (lo2, hi2)

    def atoms(self, breakpoints=((), ()), order: int = 24):
        """Discretize into weighted atoms (w, delta1, delta2)."""
        out_w, out_1, out_2 = [], [], []
        for w, c in self.active():
            x1, w1 = c.axis_nodes(0, breakpoints[0], order)
            x2, w2 = c.axis_nodes(1, breakpoints[1], order)
            out_w.append((w * np.outer(w1, w2)).ravel())
            out_1.append(np.repeat(x1, len(x2)))
            out_2.append(np.tile(x2, len(x1)))
        return np.concatenate(out_w), np.concatenate(out_1), np.concatenate(out_2)

    def to_dict(self) -> dict:
        comps = []
        for w, c in self.components:
            if isinstance(c, PointMass):
                comps.append({"weight": w, "type": "point", "mean": list(c.mean)})
            else:
                comps.append({"weight": w, "type": "normal", "mean": list(c.mean), "sd": list(c.sd)})
        return {"components": comps}

    @classmethod
    def from_dict(cls, d: dict) -> "Prior":
        comps = []
        for item in d["components"]:
            if item["type"] == "point":
                comps.append((item["weight"], PointMass(*item["mean"])))
            elif item["type"] == "normal":
                comps.append((item["weight"], NormalComponent(*item["mean"], *item["sd"])))
            else:
                raise ValueError(f"unknown prior component type {item['type']!r}")
        return cls(tuple(comps))


BUILTIN_WEIGHTS = {
    "sym": (0.25, 0.25, 0.25, 0.25),
    "asym": (0.2, 0.35, 0.1, 0.35),
    "sym-normal": (0.25, 0.25, 0.25, 0.25),
    "asym-normal": (0.2, 0.35, 0.1, 0.35),
    "subpop-only": (0.0, 0.5, 0.5, 0.0),
}


def builtin_prior(name: str, scale: DerivedScale) -> Prior:
    """Four-component priors centred on (0,0), (d1,0), (0,d2), (d1,d2)."""
    if name not in BUILTIN_WEIGHTS:
        raise ValueError(f"unknown prior {name!r}; choose from {sorted(BUILTIN_WEIGHTS)}")
    d1, d2 = scale.delta1_min, scale.delta2_min
    centres = [(0.0, 0.0), (d1, 0.0), (0.0, d2), (d1, d2)]
    if name.endswith("-normal"):
        comps = [NormalComponent(m1, m2, d1 / 2.0, d2 / 2.0) for m1, m2 in centres]
    else:
        comps = [PointMass(m1, m2) for m1, m2 in centres]
    return Prior(tuple(zip(BUILTIN_WEIGHTS[name], comps)))
