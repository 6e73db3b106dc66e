"""Standard normal helpers with tail-accurate interval masses."""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr, ndtri

TINY = 1e-300


def Phi(x):
    return ndtr(x)


def Phi_inv(p):
    return ndtri(p)


def phi(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


def interval_mass(lo, hi):
    """P[lo <= Z < hi] for standard normal Z, elementwise.

    Uses the upper tail when the interval lies right of zero so that
    far-tail masses keep full relative precision.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    upper = lo > 0
    out = np.where(upper, ndtr(-lo) - ndtr(-hi), ndtr(hi) - ndtr(lo))
    out = np.clip(out, 0.0, 1.0)
    return np.where(out < TINY, 0.0, out)


def cell_masses(edges, delta):
    """Masses of the cells [edges[i], edges[i+1]) under N(delta, 1).

    ``delta`` may be a scalar or a 1-d array; the result has shape
    ``(len(delta), len(edges) - 1)`` for arrays and ``(len(edges) - 1,)``
    for scalars.
    """
    edges = np.asarray(edges, dtype=float)
    d = np.asarray(delta, dtype=float)
    if d.ndim == 0:
        return interval_mass(edges[:-1] - d, edges[1:] - d)
    return interval_mass(edges[None, :-1] - d[:, None], edges[None, 1:] - d[:, None])
