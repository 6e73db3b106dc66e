"""Independent reference implementations used only by the tests.

None of these import the package; they recompute the same quantities by
different routes (erf instead of ndtr, brute-force quadrature instead of
CDF differences, a dense tableau simplex instead of column generation).
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


# ---------------------------------------------------------------------------
# normal distribution through math.erf / erfc


def norm_cdf(x: float) -> float:
    if x < 0:
        return 0.5 * math.erfc(-x / math.sqrt(2.0))
    return 1.0 - 0.5 * math.erfc(x / math.sqrt(2.0))


def norm_sf(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def norm_ppf(p: float) -> float:
    """Quantile by bisection on erfc (slow, exact to ~1e-15)."""
    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if norm_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def interval_mass_quad(lo: float, hi: float, order: int = 64) -> float:
    """P[lo <= Z < hi] by composite Gauss-Legendre on the density."""
    lo, hi = max(lo, -40.0), min(hi, 40.0)
    if hi <= lo:
        return 0.0
    x, w = np.polynomial.legendre.leggauss(order)
    n = max(1, int(math.ceil((hi - lo) / 0.5)))
    e = np.linspace(lo, hi, n + 1)
    total = 0.0
    for a, b in zip(e[:-1], e[1:]):
        z = 0.5 * (b - a) * x + 0.5 * (a + b)
        total += 0.5 * (b - a) * float(np.sum(w * np.exp(-0.5 * z * z))) / math.sqrt(2 * math.pi)
    return total


def rect_prob_quad(d1: float, d2: float, lo1: float, hi1: float, lo2: float, hi2: float) -> float:
    """Bivariate independent normal rectangle probability by 2-D quadrature."""
    return interval_mass_quad(lo1 - d1, hi1 - d1) * interval_mass_quad(lo2 - d2, hi2 - d2)


def rect_prob_tensor(d1, d2, lo1, hi1, lo2, hi2, order: int = 48) -> float:
    """Same probability via a genuine 2-D tensor rule (no factorization)."""
    lo1, hi1 = max(lo1, d1 - 40), min(hi1, d1 + 40)
    lo2, hi2 = max(lo2, d2 - 40), min(hi2, d2 + 40)
    if hi1 <= lo1 or hi2 <= lo2:
        return 0.0
    x, w = np.polynomial.legendre.leggauss(order)

    def nodes(lo, hi):
        n = max(1, int(math.ceil((hi - lo) / 0.5)))
        e = np.linspace(lo, hi, n + 1)
        z = (0.5 * np.diff(e)[:, None] * x + 0.5 * (e[:-1] + e[1:])[:, None]).ravel()
        ww = (0.5 * np.diff(e)[:, None] * w).ravel()
        return z, ww

    z1, w1 = nodes(lo1, hi1)
    z2, w2 = nodes(lo2, hi2)
    f = np.exp(-0.5 * ((z1[:, None] - d1) ** 2 + (z2[None, :] - d2) ** 2)) / (2 * math.pi)
    return float(w1 @ f @ w2)


# ---------------------------------------------------------------------------
# projection onto {y >= 0, sum y <= 1}


def project_capped_simplex(v) -> np.ndarray:
    """Projection by bisection on the KKT multiplier (no sorting)."""
    v = np.asarray(v, dtype=float)
    y = np.maximum(v, 0.0)
    if y.sum() <= 1.0:
        return y
    lo, hi = 0.0, float(v.max())
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.maximum(v - mid, 0.0).sum() > 1.0:
            lo = mid
        else:
            hi = mid
    return np.maximum(v - 0.5 * (lo + hi), 0.0)


# ---------------------------------------------------------------------------
# dense LP by Bland's rule (exact rational arithmetic)


def _pivot(T, z_rows, basis, leave, enter):
    piv = T[leave][enter]
    T[leave] = [v / piv for v in T[leave]]
    for i in range(len(T)):
        if i != leave and T[i][enter] != 0:
            f = T[i][enter]
            T[i] = [a - f * p for a, p in zip(T[i], T[leave])]
    for z in z_rows:
        f = z[enter]
        if f != 0:
            z[:] = [a - f * p for a, p in zip(z, T[leave])]
    basis[leave] = enter


def _bland(T, z, basis, allowed, extra_z=()):
    while True:
        enter = next((j for j in allowed if z[j] < 0), None)
        if enter is None:
            return
        best, leave = None, None
        for i in range(len(T)):
            if T[i][enter] > 0:
                ratio = T[i][-1] / T[i][enter]
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    best, leave = ratio, i
        if leave is None:
            raise ValueError("unbounded")
        _pivot(T, [z, *extra_z], basis, leave, enter)


def dense_lp_max(c, A_ub, b_ub):
    """max c.x  s.t.  A_ub x <= b_ub, x >= 0.

    Two-phase tableau simplex with Bland's rule in exact rationals.
    Returns (optimal value, x); raises ValueError when infeasible or
    unbounded.  Only for tiny problems.
    """
    frac = lambda v: Fraction(float(v))
    A = [[frac(v) for v in row] for row in np.asarray(A_ub, dtype=float)]
    b = [frac(v) for v in np.asarray(b_ub, dtype=float)]
    cc = [frac(v) for v in np.asarray(c, dtype=float)]
    m, n = len(A), len(cc)
    neg = [i for i in range(m) if b[i] < 0]
    n_art = len(neg)
    width = n + m + n_art
    T, basis = [], []
    for i in range(m):
        sgn = -1 if b[i] < 0 else 1
        row = [sgn * v for v in A[i]] + [Fraction(sgn * int(i == k)) for k in range(m)]
        row += [Fraction(int(neg[k] == i)) for k in range(n_art)] + [sgn * b[i]]
        T.append(row)
        basis.append(n + m + neg.index(i) if b[i] < 0 else n + i)
    z = [-v for v in cc] + [Fraction(0)] * (m + n_art) + [Fraction(0)]
    if n_art:
        # phase one: minimize the artificial sum, i.e. maximize its negative
        w = [Fraction(0)] * (n + m) + [Fraction(1)] * n_art + [Fraction(0)]
        for i in neg:
            w = [a - p for a, p in zip(w, T[i])]
        _bland(T, w, basis, range(width), extra_z=(z,))
        if w[-1] != 0:
            raise ValueError("infeasible")
        # drive remaining artificials out of the basis
        for i, j in enumerate(basis):
            if j >= n + m:
                enter = next((k for k in range(n + m) if T[i][k] != 0), None)
                if enter is not None:
                    _pivot(T, [z], basis, i, enter)
    _bland(T, z, basis, range(n + m))
    x = [Fraction(0)] * width
    for i, j in enumerate(basis):
        x[j] = T[i][-1]
    return float(z[-1]), np.array([float(v) for v in x[:n]])


# ---------------------------------------------------------------------------
# trial arithmetic


def n_min_closed_form(p1: float, sigma2, delta_min: float, alpha: float, power: float) -> float:
    """n_min solved in closed form: the combined non-centrality is c * sqrt(n)."""
    p2 = 1.0 - p1
    # per-unit-n variances of the subpopulation estimators (n = 1)
    v = [(sigma2[k][0] + sigma2[k][1]) / (pk / 2.0) for k, pk in enumerate((p1, p2))]
    denom = p1 * p1 * v[0] + p2 * p2 * v[1]
    rho = [math.sqrt(p1 * p1 * v[0] / denom), math.sqrt(p2 * p2 * v[1] / denom)]
    c = rho[0] * delta_min / math.sqrt(v[0]) + rho[1] * delta_min / math.sqrt(v[1])
    need = norm_ppf(1.0 - alpha) + norm_ppf(power)
    return (need / c) ** 2
