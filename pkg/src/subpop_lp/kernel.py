"""Rectangle grid and the Gaussian coefficient engine.

The z-statistics are independent N(delta_k, 1), so every rectangle
probability is a product of two interval masses and every prior integral of
a loss times a rectangle probability splits into one-dimensional pieces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._normal import TINY, cell_masses, interval_mass
from .priors import PointMass, Prior


@dataclass(frozen=True)
class Rect:
    """Half-open rectangle [lo1, hi1) x [lo2, hi2) in z-space."""

    lo1: float
    hi1: float
    lo2: float
    hi2: float
    index: tuple = (0, 0)

    def __post_init__(self):
        if not (self.lo1 < self.hi1 and self.lo2 < self.hi2):
            raise ValueError("rectangle bounds must satisfy lo < hi")

    def shifted(self, d1: float, d2: float) -> "Rect":
        return Rect(self.lo1 + d1, self.hi1 + d1, self.lo2 + d2, self.hi2 + d2, self.index)


class RectGrid:
    """Cells R_{k,k'} = [k t1, (k+1) t1) x [k' t2, (k'+1) t2) tiling the box.

    Each axis carries ``2b/tau + 1`` cells starting at ``-b``, so the last
    layer sits on [b, b + tau).  That extra layer matches the rectangle
    count used for the published problem sizes (501 cells per axis at
    tau = 0.02, b = 5).  Cells are ordered row-major with the z1 index
    first: ``r = i * n2 + j``.
    """

    def __init__(self, tau, b: float):
        if np.isscalar(tau):
            tau = (float(tau), float(tau))
        self.tau = (float(tau[0]), float(tau[1]))
        self.b = float(b)
        if min(self.tau) <= 0 or self.b <= 0:
            raise ValueError("tau and b must be positive")
        self.k0 = []
        self.n = []
        for t in self.tau:
            cells = 2.0 * self.b / t
            if abs(cells - round(cells)) > 1e-9 * max(1.0, cells):
                raise ValueError(f"tau={t} does not divide 2b={2 * self.b}")
            k0 = -self.b / t
            if abs(k0 - round(k0)) > 1e-9 * max(1.0, abs(k0)):
                raise ValueError(f"b={self.b} is not a multiple of tau={t}")
            self.k0.append(int(round(k0)))
            self.n.append(int(round(cells)) + 1)
        self.k0 = tuple(self.k0)
        self.n = tuple(self.n)

    def __repr__(self):
        return f"RectGrid(tau={self.tau}, b={self.b}, shape={self.shape})"

    @property
    def shape(self) -> tuple[int, int]:
        return self.n

    @property
    def n_rects(self) -> int:
        return self.n[0] * self.n[1]

    def __len__(self):
        return self.n_rects

    @cached_property
    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        # integer multiples of tau, so bounds are exact lattice points
        return tuple((k0 + np.arange(n + 1)) * t for k0, n, t in zip(self.k0, self.n, self.tau))

    def lower(self, axis: int) -> np.ndarray:
        return self.edges[axis][:-1]

    def centers(self, axis: int) -> np.ndarray:
        e = self.edges[axis]
        return 0.5 * (e[:-1] + e[1:])

    def rect(self, i: int, j: int) -> Rect:
        e1, e2 = self.edges
        return Rect(e1[i], e1[i + 1], e2[j], e2[j + 1], (self.k0[0] + i, self.k0[1] + j))

    def rects(self):
        for i in range(self.n[0]):
            for j in range(self.n[1]):
                yield self.rect(i, j)

    def flat_index(self, i: int, j: int) -> int:
        return i * self.n[1] + j

    def axis_probs(self, delta1, delta2):
        """Per-axis cell masses; their outer product gives rect_prob."""
        return cell_masses(self.edges[0], delta1), cell_masses(self.edges[1], delta2)

    def probs(self, delta1: float, delta2: float) -> np.ndarray:
        u1, u2 = self.axis_probs(delta1, delta2)
        return np.outer(u1, u2)

    def to_dict(self) -> dict:
        return {"tau": list(self.tau), "b": self.b}

    def __eq__(self, other):
        return isinstance(other, RectGrid) and self.tau == other.tau and self.b == other.b

    def __hash__(self):
        return hash((self.tau, self.b))


def rect_prob(delta1: float, delta2: float, rect: Rect) -> float:
    p = interval_mass(rect.lo1 - delta1, rect.hi1 - delta1) * interval_mass(rect.lo2 - delta2, rect.hi2 - delta2)
    p = float(p)
    return 0.0 if p < TINY else p


# ---------------------------------------------------------------------------
# prior integration


def _gh_rule(order: int):
    x, w = np.polynomial.hermite.hermgauss(order)
    return x * math.sqrt(2.0), w / math.sqrt(math.pi)


def _eval_f(f, d1, d2):
    try:
        out = np.asarray(f(d1, d2), dtype=float)
        if out.shape == np.shape(d1):
            return out
    except (TypeError, ValueError):
        pass
    return np.array([float(f(a, b)) for a, b in zip(np.ravel(d1), np.ravel(d2))]).reshape(np.shape(d1))


def integrate_prior(f, prior: Prior, order: int = 40, rtol: float = 1e-9, max_order: int = 640) -> float:
    """Prior expectation of ``f(delta1, delta2)``.

    Point masses are evaluated directly.  Normal components use a product
    Gauss-Hermite rule whose order doubles until two successive estimates
    agree to ``rtol``; meant for smooth integrands.
    """
    total = 0.0
    for w, comp in prior.active():
        if isinstance(comp, PointMass):
            total += w * float(_eval_f(f, np.array([comp.delta1]), np.array([comp.delta2]))[0])
            continue
        prev = None
        n = order
        while True:
            x, wx = _gh_rule(n)
            d1 = comp.mean1 + comp.sd1 * x
            d2 = comp.mean2 + comp.sd2 * x
            D1, D2 = np.meshgrid(d1, d2, indexing="ij")
            val = float(np.einsum("i,j,ij->", wx, wx, _eval_f(f, D1, D2)))
            if prev is not None and abs(val - prev) <= rtol * max(1.0, abs(val)):
                break
            if n >= max_order:
                raise ArithmeticError(f"Gauss-Hermite quadrature did not converge (last change {abs(val - prev):.3g})")
            prev = val
            n *= 2
        total += w * val
    return total


# ---------------------------------------------------------------------------
# separable coefficient engine


def _axis_vectors(comp, axis: int, kernel, threshold: float, kinds, order: int = 24):
    x, w = comp.axis_nodes(axis, breakpoints=(threshold,), order=order)
    K = kernel(x)  # (len(x), m)
    out = {}
    for kind in kinds:
        if kind == "all":
            g = np.ones_like(x)
        elif kind == "ge":
            g = (x >= threshold).astype(float)
        elif kind == "lt":
            g = (x < threshold).astype(float)
        elif kind == "dge":
            g = np.where(x >= threshold, x, 0.0)
        else:
            raise ValueError(kind)
        out[kind] = (w * g) @ K
    return out


def cell_kernel(edges):
    edges = np.asarray(edges, dtype=float)
    return lambda x: cell_masses(edges, np.atleast_1d(x))


def expected_loss_grid(kernel1, kernel2, loss, prior: Prior, actions, order: int = 24) -> np.ndarray:
    """E_prior[ L(a; delta) K1(delta1) K2(delta2) ] for every action ``a``.

    ``kernel_k`` maps an array of delta_k values to a matrix over the
    axis-k evaluation points (cell masses for LP coefficients, normal
    densities for the dual bound).  Returns shape ``(m1, m2, len(actions))``.
    """
    kinds_needed = ({"all"}, {"all"})
    term_lists = [loss.terms(a) for a in actions]
    for terms in term_lists:
        for _, axis, kind in terms:
            kinds_needed[axis].add(kind)
    out = None
    for w, comp in prior.active():
        v = [_axis_vectors(comp, k, (kernel1, kernel2)[k], loss.thresholds[k], kinds_needed[k], order) for k in range(2)]
        if out is None:
            out = np.zeros((len(v[0]["all"]), len(v[1]["all"]), len(actions)))
        for a, terms in enumerate(term_lists):
            for coef, axis, kind in terms:
                if axis == 0:
                    out[:, :, a] += w * coef * np.outer(v[0][kind], v[1]["all"])
                else:
                    out[:, :, a] += w * coef * np.outer(v[0]["all"], v[1][kind])
    out[np.abs(out) < TINY] = 0.0
    return out


def risk_arrays(grid: RectGrid, loss, prior: Prior, actions, order: int = 24) -> np.ndarray:
    """Objective coefficients for every (rect, action): shape (n1, n2, A)."""
    return expected_loss_grid(cell_kernel(grid.edges[0]), cell_kernel(grid.edges[1]), loss, prior, actions, order)


def prior_risk(loss, prior: Prior, action, order: int = 24) -> float:
    """E_prior[L(action; delta)] integrated over the whole plane."""
    full = np.array([-np.inf, np.inf])
    return float(expected_loss_grid(cell_kernel(full), cell_kernel(full), loss, prior, [frozenset(action)], order)[0, 0, 0])


def objective_coeff(rect: Rect, s, loss, prior: Prior, order: int = 24) -> float:
    """Coefficient of m_{r,s} in the Bayes objective."""
    k1 = cell_kernel([rect.lo1, rect.hi1])
    k2 = cell_kernel([rect.lo2, rect.hi2])
    return float(expected_loss_grid(k1, k2, loss, prior, [frozenset(s)], order)[0, 0, 0])
