"""Post-solve certification.

* :func:`extend_procedure` takes the monotone closure of a grid procedure
  over the whole plane.
* :func:`verify_fwer` bounds the FWER of the closure over the continuum of
  null configurations.
* :func:`dual_lower_bound` turns the LP multipliers into a lower bound on
  the Bayes risk achievable by any procedure, discretized or not.
* :func:`extend_region_lp` re-optimizes a ring of cells outside the box with
  the inner solution frozen.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from ._normal import Phi, cell_masses, phi
from .actions import ALL_SUBSETS, TESTING
from .kernel import RectGrid, expected_loss_grid
from .lpbuild import ConstraintGrid, SparseLP, build_lp
from .procedures import DiscreteProcedure
from .trial import H01, H02, H0C, HYPOTHESES, DerivedScale, true_nulls

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


# ---------------------------------------------------------------------------
# monotone extension


@dataclass
class ExtendedProcedure:
    """Monotone closure of a grid procedure on the lattice extended by two
    unbounded cells per axis.

    ``reject[h]`` has shape ``(n1 + 2, n2 + 2)``; entry (i, j) tells whether
    hypothesis ``h`` is rejected on the extended cell (i, j) whose bounds are
    ``edges[0][i:i+2] x edges[1][j:j+2]``.
    """

    base: DiscreteProcedure
    edges: tuple
    reject: dict
    randomized_share: float = 0.0

    def fwer_matrix(self, H) -> np.ndarray:
        """Indicator of rejecting at least one hypothesis of ``H``, per cell."""
        out = np.zeros_like(self.reject[H0C], dtype=bool)
        for h in H:
            out |= self.reject[h]
        return out.astype(float)

    def axis_probs(self, delta1, delta2):
        return cell_masses(self.edges[0], delta1), cell_masses(self.edges[1], delta2)

    def fwer_at(self, scale: DerivedScale, delta1: float, delta2: float) -> float:
        H = true_nulls(scale, delta1, delta2).as_set()
        if not H:
            return 0.0
        u1, u2 = self.axis_probs(delta1, delta2)
        return float(u1 @ self.fwer_matrix(H) @ u2)

    def power(self, delta1: float, delta2: float, hypothesis) -> float:
        u1, u2 = self.axis_probs(delta1, delta2)
        return float(u1 @ self.reject[hypothesis].astype(float) @ u2)

    def rejects(self, hypothesis, z1: float, z2: float) -> bool:
        i = int(np.searchsorted(self.edges[0], z1, side="right")) - 1
        j = int(np.searchsorted(self.edges[1], z2, side="right")) - 1
        return bool(self.reject[hypothesis][i, j])

    def is_monotone(self) -> bool:
        r1, r2, rc = (self.reject[h] for h in HYPOTHESES)
        return (bool(np.all(np.diff(r1.astype(int), axis=0) >= 0))
                and bool(np.all(np.diff(r2.astype(int), axis=1) >= 0))
                and bool(np.all(np.diff(rc.astype(int), axis=0) >= 0))
                and bool(np.all(np.diff(rc.astype(int), axis=1) >= 0)))


def extend_procedure(solution, grid: RectGrid | None = None, tol: float = 1e-6) -> ExtendedProcedure:
    """Monotone closure: H01 upward in z1, H02 upward in z2, H0C upward in both.

    A cell counts as rejecting ``h`` when the probability of doing so
    exceeds ``tol``, which is conservative for randomized cells.
    """
    proc = solution if isinstance(solution, DiscreteProcedure) else DiscreteProcedure(grid, TESTING, solution.x)
    n1, n2 = proc.grid.shape
    e1, e2 = proc.grid.edges
    edges = (np.concatenate([[-np.inf], e1, [np.inf]]), np.concatenate([[-np.inf], e2, [np.inf]]))
    base = {}
    for h in HYPOTHESES:
        r = np.zeros((n1 + 2, n2 + 2), dtype=bool)
        r[1:-1, 1:-1] = proc.contains(h) > tol
        base[h] = r
    # the unbounded cells above the box inherit from the closure
    ext = {
        H01: np.maximum.accumulate(base[H01], axis=0),
        H02: np.maximum.accumulate(base[H02], axis=1),
        H0C: np.maximum.accumulate(np.maximum.accumulate(base[H0C], axis=0), axis=1),
    }
    share = float(np.mean(proc.randomized_cells(tol)))
    return ExtendedProcedure(proc, edges, ext, share)


# ---------------------------------------------------------------------------
# FWER verification


def _boundary_segments(scale: DerivedScale, b_prime: float, fine_tau: float):
    """Three null-boundary lines inside [-b', b']^2 as (points, null set) pieces.

    Each line is split at the origin so the set of true nulls is constant on
    every open piece; the origin itself is evaluated with all three nulls.
    """
    r1, r2 = scale.rho
    n_axis = int(math.ceil(b_prime / fine_tau))
    t_axis = np.linspace(0.0, b_prime, n_axis + 1)
    t_max = b_prime / max(r1, r2)
    n_diag = int(math.ceil(t_max / (fine_tau / max(r1, r2))))
    t_diag = np.linspace(0.0, t_max, n_diag + 1)
    segs = []
    for sgn in (1.0, -1.0):
        t = sgn * t_axis[1:]
        segs.append(("d1=0", np.zeros_like(t), t))
        segs.append(("d2=0", t, np.zeros_like(t)))
        td = sgn * t_diag[1:]
        segs.append(("rho.d=0", r2 * td, -r1 * td))
    out = [("origin", np.zeros(1), np.zeros(1), true_nulls(scale, 0.0, 0.0).as_set())]
    for name, d1, d2 in segs:
        H = true_nulls(scale, float(d1[0]), float(d2[0])).as_set()
        out.append((name, d1, d2, H))
    return out


def fwer_along(ext: ExtendedProcedure, d1: np.ndarray, d2: np.ndarray, H) -> np.ndarray:
    """FWER at many points sharing the same true-null set."""
    M = ext.fwer_matrix(H)
    if np.all(d1 == d1[0]):
        u1 = cell_masses(ext.edges[0], float(d1[0]))
        return cell_masses(ext.edges[1], d2) @ (u1 @ M)
    if np.all(d2 == d2[0]):
        u2 = cell_masses(ext.edges[1], float(d2[0]))
        return cell_masses(ext.edges[0], d1) @ (M @ u2)
    out = np.empty(len(d1))
    step = 20000
    for s in range(0, len(d1), step):
        U1 = cell_masses(ext.edges[0], d1[s:s + step])
        U2 = cell_masses(ext.edges[1], d2[s:s + step])
        out[s:s + step] = np.sum((U1 @ M) * U2, axis=1)
    return out


def _cells_hit_by_sweep(edges, p0, v, w):
    """Extended cells meeting some box p0 + t v +/- w with t >= 0."""
    lo_t = np.zeros((len(edges[0]) - 1, len(edges[1]) - 1))
    hi_t = np.full_like(lo_t, np.inf)
    ok = np.ones_like(lo_t, dtype=bool)
    for k in range(2):
        lo = edges[k][:-1]
        hi = edges[k][1:]
        shape = (-1, 1) if k == 0 else (1, -1)
        lo = lo.reshape(shape)
        hi = hi.reshape(shape)
        if v[k] == 0:
            ok &= (lo <= p0[k] + w[k]) & (hi >= p0[k] - w[k])
        else:
            with np.errstate(invalid="ignore"):
                a = (lo - w[k] - p0[k]) / v[k]
                b = (hi + w[k] - p0[k]) / v[k]
            t0, t1 = np.minimum(a, b), np.maximum(a, b)
            lo_t = np.maximum(lo_t, t0)
            hi_t = np.minimum(hi_t, t1)
    return ok & (lo_t <= hi_t)


def tail_containment(ext: ExtendedProcedure, scale: DerivedScale, b_prime: float):
    """Check the rectangle argument for null configurations outside [-b', b']^2.

    For every boundary ray leaving the box, all boxes centred on the ray with
    half-widths (2, 3) (or (3, 2)) must avoid rejections of the ray's true
    nulls, for one of the two orientations (chosen per ray).  Then the FWER
    there is at most P[Z outside the box] <= 2 Phi(-2) + 2 Phi(-3).
    Returns (holds, per-ray orientations or None).
    """
    r1, r2 = scale.rho
    rays = []
    for sgn in (1.0, -1.0):
        rays.append(((0.0, sgn * b_prime), (0.0, sgn)))
        rays.append(((sgn * b_prime, 0.0), (sgn, 0.0)))
        t0 = b_prime / max(r1, r2)
        rays.append(((sgn * r2 * t0, -sgn * r1 * t0), (sgn * r2, -sgn * r1)))
    chosen = []
    for p0, v in rays:
        probe = (p0[0] + v[0], p0[1] + v[1])
        M = ext.fwer_matrix(true_nulls(scale, *probe).as_set()) > 0
        for w in ((2.0, 3.0), (3.0, 2.0)):
            if not np.any(_cells_hit_by_sweep(ext.edges, p0, v, w) & M):
                chosen.append(w)
                break
        else:
            return False, None
    return True, tuple(chosen)


@dataclass
class FWERReport:
    max_grid_fwer: float
    argmax: tuple
    line: str
    lipschitz_margin: float
    outside_bound: float | None
    tail_orientation: tuple | None
    certified_bound: float
    alpha: float
    passed: bool
    n_points: int
    monotone: bool
    randomized_share: float

    def to_dict(self) -> dict:
        return asdict(self)


TAIL_BOUND = float(2 * Phi(-2.0) + 2 * Phi(-3.0))


def verify_fwer(ext, scale: DerivedScale, fine_tau: float = 1e-4, b_prime: float = 8.0,
                alpha: float | None = None) -> FWERReport:
    """Grid maximum of the FWER over the boundary lines in [-b', b']^2 plus margins.

    The certified bound is max(grid max + sqrt(2/pi) fine_tau, tail bound);
    without a verified tail argument the tail term is taken as 1 and the
    check fails.
    """
    alpha = scale.alpha if alpha is None else alpha
    if isinstance(ext, DiscreteProcedure):
        ext = extend_procedure(ext)
    best, arg, line, n = -1.0, (0.0, 0.0), "", 0
    for name, d1, d2, H in _boundary_segments(scale, b_prime, fine_tau):
        vals = fwer_along(ext, d1, d2, H)
        n += len(vals)
        k = int(np.argmax(vals))
        if vals[k] > best:
            best, arg, line = float(vals[k]), (float(d1[k]), float(d2[k])), name
    margin = SQRT_2_OVER_PI * fine_tau
    ok_tail, orient = tail_containment(ext, scale, b_prime)
    outside = TAIL_BOUND if ok_tail else 1.0
    certified = max(best + margin, outside)
    return FWERReport(best, arg, line, margin, outside if ok_tail else None, orient, certified,
                      alpha, bool(certified < alpha or (certified <= alpha and best + margin <= alpha)),
                      n, ext.is_monotone(), ext.randomized_share)


def scan_fwer(ext: ExtendedProcedure, scale: DerivedScale, b: float, step: float, threshold: float):
    """Boundary points in [-b, b]^2 (spacing ``step``) whose FWER exceeds ``threshold``.

    Only local maxima along each line are returned, largest first.
    """
    found = []
    for name, d1, d2, H in _boundary_segments(scale, b, step):
        vals = fwer_along(ext, d1, d2, H)
        if len(vals) == 1:
            if vals[0] > threshold:
                found.append((float(vals[0]), float(d1[0]), float(d2[0])))
            continue
        left = np.concatenate([[-np.inf], vals[:-1]])
        right = np.concatenate([vals[1:], [-np.inf]])
        peak = (vals > threshold) & (vals >= left) & (vals >= right)
        for k in np.flatnonzero(peak):
            found.append((float(vals[k]), float(d1[k]), float(d2[k])))
    found.sort(reverse=True)
    return found


# ---------------------------------------------------------------------------
# dual lower bound


@dataclass
class DualCertificate:
    nu_p: float
    active_fwer: list
    lower_bound: float
    primal_risk: float
    bound_gap: float
    quadrature_error: float
    outside_term: float
    nodes_per_panel: int
    multipliers: str = "lp"
    # same bound for the levels the LP actually enforces (its FWER right-hand sides)
    matched_bound: float = float("nan")
    fwer_multiplier_sum: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def _gl_axis(lo, hi, width, order):
    x, w = np.polynomial.legendre.leggauss(order)
    n = int(round((hi - lo) / width))
    e = np.linspace(lo, hi, n + 1)
    half = 0.5 * np.diff(e)
    mid = 0.5 * (e[:-1] + e[1:])
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


def _lagrangian_integrand(z1, z2, loss, prior, scale, nu_p, fwer_terms):
    """Per-action integrand of the relaxed problem on the tensor grid (z1 x z2)."""
    k1 = lambda d: phi(z1[None, :] - np.atleast_1d(d)[:, None])
    k2 = lambda d: phi(z2[None, :] - np.atleast_1d(d)[:, None])
    acts = ALL_SUBSETS.actions
    G = expected_loss_grid(k1, k2, loss, prior, acts)
    if nu_p:
        dens = np.outer(phi(z1 - scale.delta1_min), phi(z2 - scale.delta2_min))
        for a, s in enumerate(acts):
            if H0C in s:
                G[:, :, a] -= nu_p * dens
    for nu, d1, d2, H in fwer_terms:
        dens = np.outer(phi(z1 - d1), phi(z2 - d2))
        for a, s in enumerate(acts):
            if s & H:
                G[:, :, a] += nu * dens
    return G


def lagrangian_value(procedure, scale, loss, prior, nu_p, fwer_terms, alpha, power) -> float:
    """Risk + nu_j (FWER_j - alpha) - nu_p (power - target) of any procedure."""
    from .procedures import evaluate_bayes_risk, evaluate_power, fwer_at

    val = evaluate_bayes_risk(procedure, loss, prior)
    val -= nu_p * (evaluate_power(procedure, *scale.delta_min, H0C) - power)
    for nu, d1, d2, _ in fwer_terms:
        val += nu * (fwer_at(procedure, scale, d1, d2) - alpha)
    return float(val)


def dual_lower_bound(solution, lp: SparseLP, loss, prior, scale: DerivedScale, alpha: float | None = None,
                     power: float | None = None, width: float = 0.25, half_range: float = 10.0,
                     orders=(4, 8, 16), tol: float = 1e-8) -> DualCertificate:
    """Lower bound on the Bayes risk of every procedure meeting the constraints.

    Minimizes the Lagrangian pointwise over all eight subsets on a
    Gauss-Legendre tensor grid over [-10, 10]^2.  The quadrature error
    estimate from the last refinement is subtracted, as is the most the
    integrand can lose outside the square.
    """
    if solution.duals is None or len(solution.duals) != lp.n_d:
        raise ValueError("solution has no dual values for this LP")
    alpha = scale.alpha if alpha is None else alpha
    power = lp.meta.get("power", 1.0 - scale.beta) if power is None else power
    nu_p = 0.0
    terms, levels = [], []
    for y, row in zip(solution.duals, lp.rows):
        if y <= 0:
            continue
        if row.tag == "POWER":
            nu_p += float(y)
        elif row.tag == "FWER":
            d1, d2 = row.point
            terms.append((float(y), d1, d2, true_nulls(scale, d1, d2).as_set()))
            levels.append(float(row.rhs))
    prev = None
    err = np.inf
    for order in orders:
        z1, w1 = _gl_axis(-half_range, half_range, width, order)
        G = _lagrangian_integrand(z1, z1, loss, prior, scale, nu_p, terms)
        val = float(w1 @ G.min(axis=2) @ w1)
        if prev is not None:
            err = abs(val - prev)
            if err <= tol:
                break
        prev = val
    inside = (Phi(half_range - scale.delta1_min) - Phi(-half_range - scale.delta1_min)) * \
             (Phi(half_range - scale.delta2_min) - Phi(-half_range - scale.delta2_min))
    outside_term = -nu_p * float(1.0 - inside)
    base = val - err + outside_term + nu_p * power
    nu = np.array([t[0] for t in terms])
    lower = base - alpha * nu.sum()
    matched = base - float(nu @ np.array(levels)) if terms else base
    primal = lp.bayes_risk(solution.x)
    return DualCertificate(nu_p, [(t[0], t[1], t[2]) for t in terms], float(lower), float(primal),
                           float(abs(primal - lower)), float(err), outside_term, order,
                           matched_bound=float(matched), fwer_multiplier_sum=float(nu.sum()))


# ---------------------------------------------------------------------------
# extension of the optimized region


def embed(proc: DiscreteProcedure, grid: RectGrid) -> np.ndarray:
    """Place ``proc`` (on a sub-lattice) inside ``grid``; returns (m, inner_mask)."""
    off = [proc.grid.k0[k] - grid.k0[k] for k in range(2)]
    n1, n2 = proc.grid.shape
    if proc.grid.tau != grid.tau or min(off) < 0 or off[0] + n1 > grid.shape[0] or off[1] + n2 > grid.shape[1]:
        raise ValueError("inner procedure is not aligned with the outer grid")
    m = np.zeros((*grid.shape, proc.space.n_free))
    m[off[0]:off[0] + n1, off[1]:off[1] + n2] = proc.m
    mask = np.zeros(grid.shape, bool)
    mask[off[0]:off[0] + n1, off[1]:off[1] + n2] = True
    return m, mask


def extend_region_lp(solution, b: float, b_prime: float, scale: DerivedScale, grid: RectGrid, loss, prior,
                     tau_g: float | None = None, power: float | None = None, alpha_margin: float = 1e-4,
                     config=None):
    """Optimize the cells of [-b', b']^2 outside [-b, b]^2 with the inner solution frozen.

    Returns ``(procedure on the larger grid, LPSolution, SparseLP)``.
    """
    from .solver import solve

    if b_prime <= b:
        raise ValueError("b_prime must exceed b")
    inner = solution if isinstance(solution, DiscreteProcedure) else DiscreteProcedure(grid, TESTING, solution.x)
    outer = RectGrid(grid.tau, b_prime)
    m_fixed, inner_mask = embed(inner, outer)
    cg = ConstraintGrid.build(scale, b_prime, tau_g=tau_g)
    base = build_lp(scale, outer, cg, loss, prior, power=power, alpha_margin=alpha_margin)
    lp = SparseLP(outer, TESTING, base.c, base.rows, base.const, free=~inner_mask, x_fixed=m_fixed,
                  meta={**base.meta, "kind": "ring", "b": b, "b_prime": b_prime})
    sol = solve(lp, config, warm_subgradient=False)
    proc = DiscreteProcedure(outer, TESTING, lp.full_x(sol.x), f"{inner.label} extended to b'={b_prime:g}")
    return proc, sol, lp


def report_json(obj) -> str:
    def conv(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, (frozenset, set, tuple)):
            return sorted(map(str, o)) if isinstance(o, (frozenset, set)) else list(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o))

    return json.dumps(obj, default=conv, sort_keys=True, indent=2)
