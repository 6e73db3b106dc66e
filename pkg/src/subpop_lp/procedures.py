"""Multiple testing procedures: LP optima on a grid and closed-form baselines.

Discrete procedures hold a per-cell distribution over actions.  Analytic
procedures are threshold rules in (z1, z2, zC) with zC = rho1 z1 + rho2 z2;
their operating characteristics are computed by integrating along one axis
with Gauss-Legendre panels cut at every threshold crossing, while the other
axis is handled exactly through normal interval masses.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from ._normal import Phi_inv, cell_masses, interval_mass, phi
from .actions import ALL_SUBSETS, DECISION, TESTING, ActionSpace, action_label
from .kernel import RectGrid, prior_risk, risk_arrays
from .priors import PointMass, Prior
from .trial import H01, H02, H0C, DerivedScale, true_nulls

# ---------------------------------------------------------------------------
# discrete procedures


@dataclass
class DiscreteProcedure:
    """``m[i, j, a]`` = probability of taking ``space.actions[a + 1]`` in cell (i, j).

    Outside the grid the procedure takes the do-nothing action.
    """

    grid: RectGrid
    space: ActionSpace
    m: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=float)
        if self.m.shape != (*self.grid.shape, self.space.n_free):
            raise ValueError("m does not match grid and action space")
        if self.m.min(initial=0.0) < -1e-9 or self.m.sum(axis=2).max(initial=0.0) > 1 + 1e-9:
            raise ValueError("per-cell action probabilities must be >= 0 and sum to <= 1")

    def full(self) -> np.ndarray:
        """Distribution including the do-nothing action, shape (n1, n2, A + 1)."""
        rest = np.clip(1.0 - self.m.sum(axis=2, keepdims=True), 0.0, 1.0)
        return np.concatenate([rest, self.m], axis=2)

    def contains(self, item) -> np.ndarray:
        """Per-cell probability that the chosen action contains ``item``."""
        mask = np.array(self.space.contains(item)[1:], dtype=float)
        return self.m @ mask

    def action_probs(self, delta1: float, delta2: float) -> np.ndarray:
        """Probability of each action of the space (do-nothing first)."""
        u1, u2 = self.grid.axis_probs(delta1, delta2)
        p = np.einsum("i,ija,j->a", u1, self.m, u2)
        return np.concatenate([[1.0 - p.sum()], p])

    def power(self, delta1: float, delta2: float, hypothesis) -> float:
        u1, u2 = self.grid.axis_probs(delta1, delta2)
        return float(u1 @ self.contains(hypothesis) @ u2)

    def fwer_at(self, scale: DerivedScale, delta1: float, delta2: float) -> float:
        H = true_nulls(scale, delta1, delta2).as_set()
        if not H:
            return 0.0
        mask = np.array([1.0 if a & H else 0.0 for a in self.space.actions[1:]])
        u1, u2 = self.grid.axis_probs(delta1, delta2)
        return float(u1 @ (self.m @ mask) @ u2)

    def bayes_risk(self, loss, prior: Prior) -> float:
        R = risk_arrays(self.grid, loss, prior, self.space.actions)
        inside = float(np.sum(self.full() * R))
        outside = prior_risk(loss, prior, self.space.actions[0]) - float(R[:, :, 0].sum())
        return inside + outside

    def deterministic_actions(self) -> np.ndarray:
        """Index into ``space.actions`` of the most likely action per cell."""
        return np.argmax(self.full(), axis=2)

    def randomized_cells(self, tol: float = 1e-6) -> np.ndarray:
        return self.full().max(axis=2) < 1.0 - tol

    def is_coherent(self, tol: float = 1e-9) -> bool:
        bad = [k for k, a in enumerate(self.space.actions[1:]) if {H01, H02} <= a and H0C not in a]
        return not bad or float(self.m[:, :, bad].max()) <= tol

    # io -----------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "grid": self.grid.to_dict(),
            "actions": self.space.labels(),
            "space": self.space.name,
            "m": np.round(self.m, 15).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteProcedure":
        spaces = {s.name: s for s in (TESTING, DECISION, ALL_SUBSETS)}
        grid = RectGrid(tuple(d["grid"]["tau"]), d["grid"]["b"])
        return cls(grid, spaces[d["space"]], np.array(d["m"]), d.get("label", ""))

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def from_json(cls, path) -> "DiscreteProcedure":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def region_csv(self, tol: float = 1e-6) -> str:
        """Rows (k, k', z1_lo, z2_lo, action_label, randomized, distribution)."""
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["k", "k2", "z1_lo", "z2_lo", "action", "randomized", "distribution"])
        full = self.full()
        best = np.argmax(full, axis=2)
        rand = full.max(axis=2) < 1.0 - tol
        labels = self.space.labels()
        e1, e2 = self.grid.edges
        for i in range(self.grid.shape[0]):
            for j in range(self.grid.shape[1]):
                dist = ""
                if rand[i, j]:
                    dist = ";".join(f"{labels[a]}:{full[i, j, a]:.6f}" for a in range(len(labels)) if full[i, j, a] > tol)
                w.writerow([self.grid.k0[0] + i, self.grid.k0[1] + j, f"{e1[i]:.10g}", f"{e2[j]:.10g}",
                            labels[best[i, j]], int(rand[i, j]), dist])
        return out.getvalue()


# ---------------------------------------------------------------------------
# analytic procedures

# code = r1 + 2 r2 + 4 rc  ->  index into ALL_SUBSETS.actions
_CODE_ACTION = []
for _code in range(8):
    _s = frozenset(h for h, bit in ((H01, 1), (H02, 2), (H0C, 4)) if _code & bit)
    _CODE_ACTION.append(ALL_SUBSETS.actions.index(_s))
_CODE_ACTION = np.array(_CODE_ACTION)


def bergmann_hommel(z1, z2, zC, alpha: float = 0.05) -> frozenset:
    """Rejected set of the exhaustive-subset Bergmann-Hommel procedure."""
    r1, r2, rc = _bh_flags(np.asarray(z1, float), np.asarray(z2, float), np.asarray(zC, float), alpha)
    return frozenset(h for h, f in ((H01, r1), (H02, r2), (H0C, rc)) if bool(f))


# exhaustive index sets; {1, 2} and {C} alone cannot be the exact set of true nulls
EXHAUSTIVE = (("1",), ("2",), ("1", "C"), ("2", "C"), ("1", "2", "C"))


def _bh_flags(z1, z2, zC, alpha):
    z = {"1": z1, "2": z2, "C": zC}
    keep = {"1": np.zeros(np.shape(z1), bool), "2": np.zeros(np.shape(z1), bool), "C": np.zeros(np.shape(z1), bool)}
    for J in EXHAUSTIVE:
        q = float(Phi_inv(1.0 - alpha / len(J)))
        ok = np.ones(np.shape(z1), bool)
        for j in J:
            ok &= z[j] < q
        for j in J:
            keep[j] = keep[j] | ok
    return ~keep["1"], ~keep["2"], ~keep["C"]


def song_chi_augmented(z1, z2, zC, alpha0: float, alpha1: float, alpha2: float, alpha: float = 0.05) -> frozenset:
    r1, r2, rc = _sc_flags(np.asarray(z1, float), np.asarray(z2, float), np.asarray(zC, float),
                           alpha0, alpha1, alpha2, alpha)
    return frozenset(h for h, f in ((H01, r1), (H02, r2), (H0C, rc)) if bool(f))


def _sc_thresholds(alpha0, alpha1, alpha2, alpha):
    big = np.inf
    c0 = float(Phi_inv(1.0 - alpha0)) if alpha0 > 0 else big
    c1 = float(Phi_inv(1.0 - alpha1)) if alpha1 < 1 else -big
    c2 = float(Phi_inv(1.0 - alpha2)) if alpha2 > 0 else big
    if alpha2 >= 1:
        c2 = -big
    za = float(Phi_inv(1.0 - alpha))
    return c0, c1, c2, za


def _sc_flags(z1, z2, zC, alpha0, alpha1, alpha2, alpha):
    c0, c1, c2, za = _sc_thresholds(alpha0, alpha1, alpha2, alpha)
    first = zC > c0
    second = (zC <= c0) & (zC > c1) & (z1 > c2)
    r1 = (first & (z1 > za)) | second
    r2 = first & (z2 > za)
    rc = first | (second & (zC > za))
    return r1, r2, rc


@dataclass(frozen=True)
class AnalyticProcedure:
    """Threshold rule on (z1, z2, zC); ``kind`` in ump, rosenbaum, bergmann_hommel, song_chi."""

    kind: str
    scale: DerivedScale
    alpha: float = 0.05
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("ump", "rosenbaum", "bergmann_hommel", "song_chi"):
            raise ValueError(f"unknown procedure kind {self.kind!r}")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.kind == "song_chi":
            a0, a1, a2 = (self.params[k] for k in ("alpha0", "alpha1", "alpha2"))
            if not (0 <= a0 < self.alpha < a1 <= 1 and 0 <= a2 <= 1):
                raise ValueError("need 0 <= alpha0 < alpha < alpha1 <= 1 and 0 <= alpha2 <= 1")

    @property
    def label(self) -> str:
        return self.kind

    def flags(self, z1, z2):
        """Rejection indicators (r1, r2, rC) at the given z points."""
        z1 = np.asarray(z1, dtype=float)
        z2 = np.asarray(z2, dtype=float)
        zC = self.scale.rho1 * z1 + self.scale.rho2 * z2
        za = float(Phi_inv(1.0 - self.alpha))
        if self.kind == "ump":
            rc = zC > za
            return np.zeros_like(rc), np.zeros_like(rc), rc
        if self.kind == "rosenbaum":
            rc = zC > za
            return rc & (z1 > za), rc & (z2 > za), rc
        if self.kind == "bergmann_hommel":
            return _bh_flags(z1, z2, zC, self.alpha)
        p = self.params
        return _sc_flags(z1, z2, zC, p["alpha0"], p["alpha1"], p["alpha2"], self.alpha)

    def decide(self, z1, z2) -> np.ndarray:
        """Index into ``ALL_SUBSETS.actions`` of the rejected set."""
        r1, r2, rc = self.flags(z1, z2)
        return _CODE_ACTION[r1.astype(int) + 2 * r2.astype(int) + 4 * rc.astype(int)]

    def rejects(self, z1: float, z2: float) -> frozenset:
        return ALL_SUBSETS.actions[int(self.decide(z1, z2))]

    def thresholds(self) -> dict:
        """Finite thresholds on each statistic, used to place quadrature breaks."""
        za = float(Phi_inv(1.0 - self.alpha))
        if self.kind == "ump":
            t = {"z1": [], "z2": [], "zc": [za]}
        elif self.kind == "rosenbaum":
            t = {"z1": [za], "z2": [za], "zc": [za]}
        elif self.kind == "bergmann_hommel":
            q = [float(Phi_inv(1.0 - self.alpha / m)) for m in (1, 2, 3)]
            t = {"z1": q, "z2": q, "zc": q}
        else:
            p = self.params
            c0, c1, c2, za = _sc_thresholds(p["alpha0"], p["alpha1"], p["alpha2"], self.alpha)
            t = {"z1": [c2, za], "z2": [za], "zc": [c0, c1, za]}
        return {k: sorted({v for v in vals if math.isfinite(v)}) for k, vals in t.items()}

    def to_dict(self) -> dict:
        return {"kind": self.kind, "alpha": self.alpha, "params": dict(self.params)}


def ump(scale: DerivedScale, alpha: float = 0.05) -> AnalyticProcedure:
    return AnalyticProcedure("ump", scale, alpha)


def rosenbaum(scale: DerivedScale, alpha: float = 0.05) -> AnalyticProcedure:
    return AnalyticProcedure("rosenbaum", scale, alpha)


def bergmann_hommel_procedure(scale: DerivedScale, alpha: float = 0.05) -> AnalyticProcedure:
    return AnalyticProcedure("bergmann_hommel", scale, alpha)


def song_chi(scale: DerivedScale, alpha0: float = 0.045, alpha1: float = 0.1, alpha2: float | None = None,
             alpha: float = 0.05) -> AnalyticProcedure:
    if alpha2 is None:
        alpha2 = calibrate_song_chi_alpha2(scale, alpha0, alpha1, alpha)
    return AnalyticProcedure("song_chi", scale, alpha, {"alpha0": alpha0, "alpha1": alpha1, "alpha2": alpha2})


# ---------------------------------------------------------------------------
# exact evaluation of analytic procedures

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _panel_nodes(lo, hi, cuts, width):
    pts = sorted({lo, hi, *(c for c in cuts if lo < c < hi)})
    xs, ws = [], []
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(1, int(math.ceil((b - a) / width)))
        e = np.linspace(a, b, n + 1)
        half = 0.5 * np.diff(e)
        mid = 0.5 * (e[:-1] + e[1:])
        xs.append((mid[:, None] + half[:, None] * _GL_X).ravel())
        ws.append((half[:, None] * _GL_W).ravel())
    return np.concatenate(xs), np.concatenate(ws)


def _axis_law(comp, axis):
    """Marginal law of Z_k under a prior component: (mean, sd, posterior (m(z), v) or None)."""
    if isinstance(comp, PointMass):
        return comp.mean[axis], 1.0, None
    s2 = comp.sd[axis] ** 2
    return comp.mean[axis], math.sqrt(1.0 + s2), s2


def _term_factor(comp, axis, kind, threshold, z):
    """E[g_kind(delta_k) | Z_k = z] under the component (constant for point masses)."""
    mu = comp.mean[axis]
    if isinstance(comp, PointMass):
        d = mu
        val = {"all": 1.0, "ge": float(d >= threshold), "lt": float(d < threshold),
               "dge": d if d >= threshold else 0.0}[kind]
        return np.full_like(z, val)
    s2 = comp.sd[axis] ** 2
    m = (mu + s2 * z) / (1.0 + s2)
    sd = math.sqrt(s2 / (1.0 + s2))
    u = (m - threshold) / sd
    if kind == "all":
        return np.ones_like(z)
    if kind == "ge":
        return ndtr(u)
    if kind == "lt":
        return ndtr(-u)
    if kind == "dge":
        return m * ndtr(u) + sd * phi(u)
    raise ValueError(kind)


def _integrate_actions(proc: AnalyticProcedure, comp, outer: int, factor) -> np.ndarray:
    """Integral of factor(z_outer) * 1[action] over z-space under the component's predictive law.

    Returns one value per action of ``ALL_SUBSETS``.
    """
    inner = 1 - outer
    rho = proc.scale.rho
    th = proc.thresholds()
    t_out, t_in = th["z1" if outer == 0 else "z2"], th["z2" if outer == 0 else "z1"]
    mu_o, sd_o, _ = _axis_law(comp, outer)
    mu_i, sd_i, _ = _axis_law(comp, inner)
    cuts = list(t_out) + [(c - rho[inner] * t) / rho[outer] for c in th["zc"] for t in t_in]
    z, w = _panel_nodes(mu_o - 12 * sd_o, mu_o + 12 * sd_o, cuts, 0.25 * sd_o)
    w = w * np.exp(-0.5 * ((z - mu_o) / sd_o) ** 2) / (sd_o * math.sqrt(2 * math.pi)) * factor(z)
    # inner breakpoints for each outer node
    bp = [np.full_like(z, t) for t in t_in] + [(c - rho[outer] * z) / rho[inner] for c in th["zc"]]
    bp = np.sort(np.stack(bp, axis=1), axis=1) if bp else np.zeros((len(z), 0))
    lo = np.concatenate([np.full((len(z), 1), -np.inf), bp], axis=1)
    hi = np.concatenate([bp, np.full((len(z), 1), np.inf)], axis=1)
    mid = np.where(np.isinf(lo), hi - 1.0, np.where(np.isinf(hi), lo + 1.0, 0.5 * (lo + hi)))
    mid = np.where(np.isinf(lo) & np.isinf(hi), 0.0, mid)
    zz = np.broadcast_to(z[:, None], mid.shape)
    act = proc.decide(zz, mid) if outer == 0 else proc.decide(mid, zz)
    mass = interval_mass((lo - mu_i) / sd_i, (hi - mu_i) / sd_i)
    out = np.zeros(len(ALL_SUBSETS.actions))
    np.add.at(out, act.ravel(), (mass * w[:, None]).ravel())
    return out


def analytic_action_probs(proc: AnalyticProcedure, delta1: float, delta2: float) -> np.ndarray:
    """P_delta[rejected set = s] for every s in ``ALL_SUBSETS.actions``."""
    comp = PointMass(float(delta1), float(delta2))
    return _integrate_actions(proc, comp, 0, lambda z: np.ones_like(z))


def evaluate_power(procedure, delta1: float, delta2: float, hypothesis) -> float:
    """Probability that the procedure rejects (a set containing) ``hypothesis``."""
    if isinstance(procedure, DiscreteProcedure):
        return procedure.power(delta1, delta2, hypothesis)
    p = analytic_action_probs(procedure, delta1, delta2)
    return float(sum(pa for pa, a in zip(p, ALL_SUBSETS.actions) if hypothesis in a))


def fwer_at(procedure, scale: DerivedScale, delta1: float, delta2: float) -> float:
    if hasattr(procedure, "fwer_at") and not isinstance(procedure, AnalyticProcedure):
        return procedure.fwer_at(scale, delta1, delta2)
    H = true_nulls(scale, delta1, delta2).as_set()
    p = analytic_action_probs(procedure, delta1, delta2)
    return float(sum(pa for pa, a in zip(p, ALL_SUBSETS.actions) if a & H))


def evaluate_bayes_risk(procedure, loss, prior: Prior) -> float:
    """Prior expectation of the expected loss."""
    if isinstance(procedure, DiscreteProcedure):
        return procedure.bayes_risk(loss, prior)
    total = 0.0
    for w, comp in prior.active():
        # group terms by (axis, kind) so each integral is done once
        needed = {}
        for ai, a in enumerate(ALL_SUBSETS.actions):
            for coef, axis, kind in loss.terms(a):
                needed.setdefault((axis, kind), []).append((ai, coef))
        for (axis, kind), uses in needed.items():
            thr = loss.thresholds[axis]
            vals = _integrate_actions(procedure, comp, axis, lambda z: _term_factor(comp, axis, kind, thr, z))
            total += w * sum(coef * vals[ai] for ai, coef in uses)
    return float(total)


# ---------------------------------------------------------------------------
# Song-Chi calibration


def _local_test_size(scale: DerivedScale, alpha0, alpha1, alpha2, d1, dC) -> float:
    """P[ZC > c0] + P[c0 >= ZC > c1, Z1 > c2] with Z1 ~ N(d1, 1), ZC ~ N(dC, 1), corr rho1."""
    c0, c1, c2, _ = _sc_thresholds(alpha0, alpha1, alpha2, 0.05)
    first = float(ndtr(dC - c0))
    if not (c1 < c0) or c2 == np.inf:
        return first
    x, w = np.polynomial.legendre.leggauss(64)
    zc = 0.5 * (c0 + c1) + 0.5 * (c0 - c1) * x
    r = scale.rho1
    cond = ndtr((d1 + r * (zc - dC) - c2) / math.sqrt(1.0 - r * r))
    second = 0.5 * (c0 - c1) * float(np.sum(w * phi(zc - dC) * cond))
    return first + second


def song_chi_size(scale: DerivedScale, alpha0: float, alpha1: float, alpha2: float, n_scan: int = 81) -> float:
    """Sup of the H01 & H0C local-test rejection probability over that null's boundary."""
    t = np.linspace(0.0, 8.0, n_scan)
    vals = [_local_test_size(scale, alpha0, alpha1, alpha2, 0.0, -s) for s in t]
    vals += [_local_test_size(scale, alpha0, alpha1, alpha2, -s, 0.0) for s in t]
    return float(max(vals))


def calibrate_song_chi_alpha2(scale: DerivedScale, alpha0: float = 0.045, alpha1: float = 0.1,
                              alpha: float = 0.05, tol: float = 1e-12) -> float:
    """Largest alpha2 whose local test of H01 & H0C has size <= alpha (bisection)."""
    if song_chi_size(scale, alpha0, alpha1, 0.0) > alpha:
        raise ValueError("even alpha2 = 0 exceeds the level; check alpha0")
    if song_chi_size(scale, alpha0, alpha1, 1.0) <= alpha:
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if song_chi_size(scale, alpha0, alpha1, mid) <= alpha:
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# discretization


def _predictive_cells(grid: RectGrid, prior: Prior):
    """Per-component predictive cell masses (u1, u2) of Z under the prior."""
    out = []
    for w, comp in prior.active():
        u = []
        for k in range(2):
            mu, sd, _ = _axis_law(comp, k)
            u.append(interval_mass((grid.edges[k][:-1] - mu) / sd, (grid.edges[k][1:] - mu) / sd))
        out.append((w, u[0], u[1]))
    return out


def straddle_mask(proc: AnalyticProcedure, grid: RectGrid) -> np.ndarray:
    """Cells cut by any threshold line of the procedure."""
    e1, e2 = grid.edges
    th = proc.thresholds()
    n1, n2 = grid.shape
    mask = np.zeros((n1, n2), bool)
    for t in th["z1"]:
        mask |= ((e1[:-1] < t) & (t < e1[1:]))[:, None]
    for t in th["z2"]:
        mask |= ((e2[:-1] < t) & (t < e2[1:]))[None, :]
    r1, r2 = proc.scale.rho
    for c in th["zc"]:
        corners = [r1 * e1[:-1, None] + r2 * e2[None, :-1], r1 * e1[1:, None] + r2 * e2[None, :-1],
                   r1 * e1[:-1, None] + r2 * e2[None, 1:], r1 * e1[1:, None] + r2 * e2[None, 1:]]
        lo = np.minimum.reduce(corners)
        hi = np.maximum.reduce(corners)
        mask |= (lo < c) & (c < hi)
    return mask


def discretize_analytic(proc: AnalyticProcedure, grid: RectGrid, prior: Prior | None = None):
    """Cell action = rule at the cell centre.

    Returns ``(procedure, straddle_mass)`` where the mass is the prior
    predictive probability of cells cut by a threshold (or, without a prior,
    the largest such probability over the prior-free points (0,0) and
    (dmin1, dmin2)).
    """
    c1, c2 = grid.centers(0), grid.centers(1)
    Z1, Z2 = np.meshgrid(c1, c2, indexing="ij")
    act = ALL_SUBSETS.actions
    idx = proc.decide(Z1, Z2)
    m = np.zeros((*grid.shape, TESTING.n_free))
    for k, a in enumerate(act):
        hit = idx == k
        if not a or not hit.any():
            continue
        if a not in TESTING.actions:
            raise ValueError(f"{proc.kind} takes the incoherent action {action_label(a)}")
        m[:, :, TESTING.index(a) - 1] += hit
    dp = DiscreteProcedure(grid, TESTING, m, f"{proc.kind} (discretized)")
    S = straddle_mask(proc, grid).astype(float)
    if prior is None:
        masses = []
        for d in ((0.0, 0.0), proc.scale.delta_min):
            u1, u2 = grid.axis_probs(*d)
            masses.append(float(u1 @ S @ u2))
        mass = max(masses)
    else:
        mass = sum(w * float(u1 @ S @ u2) for w, u1, u2 in _predictive_cells(grid, prior))
    return dp, mass


def power_table(procedure, scale: DerivedScale) -> dict:
    """Operating characteristics in the layout of the summary tables."""
    d1, d2 = scale.delta_min
    both1 = evaluate_power(procedure, d1, d2, H01)
    both2 = evaluate_power(procedure, d1, d2, H02)
    return {
        "power_H01_at_d1min_0": evaluate_power(procedure, d1, 0.0, H01),
        "power_H02_at_0_d2min": evaluate_power(procedure, 0.0, d2, H02),
        "power_H01_at_both": both1,
        "power_H02_at_both": both2,
        "power_avg_both": 0.5 * (both1 + both2),
        "power_H0C_at_both": evaluate_power(procedure, d1, d2, H0C),
    }


def cell_masses_at(grid: RectGrid, delta1: float, delta2: float):
    return cell_masses(grid.edges[0], delta1), cell_masses(grid.edges[1], delta2)
