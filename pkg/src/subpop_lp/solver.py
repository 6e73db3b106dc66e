"""Two-phase solver for the block-angular LP built in :mod:`subpop_lp.lpbuild`.

Phase one is a projected subgradient method: ascend along the objective
while every coupling row holds, otherwise step against one randomly chosen
violated row, then project each cell back onto {y >= 0, sum y <= 1}.

Phase two solves the LP exactly by column generation.  The restricted
master (coupling rows plus one convexity row per cell that owns a column)
is handed to HiGHS; columns are priced with the factored rows so the full
coefficient matrix is never built.  The returned gap is recomputed from the
Lagrangian bound

    D(y) = y . b + sum_cells max(0, max_a (c - A^T y)_{cell, a}),

which is a valid upper bound on the optimum for every y >= 0.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

log = logging.getLogger(__name__)

HIGHS_OPTIONS = {
    "presolve": True,
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}
# HiGHS ignores matrix entries below 1e-9; smaller ones are dropped here and
# the resulting violation is measured afterwards from the exact rows
COEF_FLOOR = 1e-12
# dual simplex first; presolve-free and interior-point retries for the rare
# numerically hard master
MASTER_ATTEMPTS = (("highs-ds", {}), ("highs-ds", {"presolve": False}), ("highs-ipm", {}))
# elastic penalties may grow by this factor when a multiplier hits the cap
MAX_PENALTY_FACTOR = 1e5


@dataclass
class SolverConfig:
    step_rule: str = "diminishing"  # or "polyak"
    gamma: float | None = None  # diminishing step scale; default 1/||c||
    polyak_target: float | None = None
    improvement_tol: float = 1e-3
    window: int = 50
    gap_tol: float = 1e-8
    max_iters: int = 1000
    rng_seed: int = 0
    refine_method: str = "colgen"  # or "full"
    feasibility_tol: float = 1e-4  # subgradient hand-off
    activity_tol: float = 1e-7
    pricing_tol: float = 1e-11
    max_rounds: int = 200
    columns_per_round: int = 4000
    elastic_penalty: float = 1e3
    purge_tol: float = 1e-6
    stop_gap_ratio: float = 0.1
    log_path: str | None = None

    def __post_init__(self):
        if self.step_rule not in ("diminishing", "polyak"):
            raise ValueError("step_rule must be 'diminishing' or 'polyak'")
        if self.refine_method not in ("colgen", "full"):
            raise ValueError("refine_method must be 'colgen' or 'full'")
        if min(self.improvement_tol, self.gap_tol, self.feasibility_tol, self.activity_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


class InfeasibleError(RuntimeError):
    """Coupling rows cannot all hold; ``certificate`` proves it."""

    def __init__(self, msg, certificate=None):
        super().__init__(msg)
        self.certificate = certificate


@dataclass
class LPSolution:
    x: np.ndarray  # free part, shape (n1, n2, A)
    objective: float
    duals: np.ndarray
    dual_bound: float
    gap: float
    max_violation: float
    active_set: list
    iterations: int = 0
    wall_time: float = 0.0
    status: str = "optimal"
    log: list = field(default_factory=list)

    def fractional_share(self, tol: float = 1e-6) -> float:
        """Share of cells whose action distribution is not a point mass."""
        full = np.concatenate([1.0 - self.x.sum(axis=2, keepdims=True), self.x], axis=2)
        return float(np.mean(full.max(axis=2) < 1.0 - tol))

    def complementary_slackness(self, lp) -> float:
        return float(np.max(np.abs(self.duals * lp.slack(self.x)))) if lp.n_d else 0.0

    def save(self, path) -> None:
        np.savez_compressed(path, x=self.x, duals=self.duals,
                            scalars=np.array([self.objective, self.dual_bound, self.gap, self.max_violation]))

    @staticmethod
    def load_x(path) -> np.ndarray:
        with np.load(path) as f:
            return f["x"]


# ---------------------------------------------------------------------------
# projection


def project_block(m) -> np.ndarray:
    """Euclidean projection of each trailing-axis block onto {y >= 0, sum y <= 1}."""
    m = np.asarray(m, dtype=float)
    y = np.maximum(m, 0.0)
    over = y.sum(axis=-1) > 1.0
    if not np.any(over):
        return y
    v = m[over]
    # projection onto the probability simplex for the offending blocks
    u = -np.sort(-v, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    k = np.arange(1, v.shape[-1] + 1)
    cond = u - css / k > 0
    r = v.shape[-1] - 1 - np.argmax(cond[:, ::-1], axis=-1)
    theta = css[np.arange(len(v)), r] / (r + 1.0)
    y[over] = np.maximum(v - theta[:, None], 0.0)
    return y


# ---------------------------------------------------------------------------
# phase one


def subgradient_phase(lp, config: SolverConfig | None = None, x0=None):
    """Projected subgradient iterations; returns ``(x, iteration_log)``."""
    cfg = config or SolverConfig()
    rng = np.random.default_rng(cfg.rng_seed)
    free = lp.free_mask[:, :, None]
    X = np.zeros(lp.shape) if x0 is None else project_block(np.asarray(x0, dtype=float).reshape(lp.shape))
    X = np.where(free, X, 0.0)
    c = np.where(free, lp.c, 0.0)
    cnorm = float(np.linalg.norm(c))
    gamma = cfg.gamma if cfg.gamma is not None else (1.0 / cnorm if cnorm > 0 else 1.0)
    records = []
    best_hist = []
    best = -np.inf
    sink = open(cfg.log_path, "w") if cfg.log_path else None
    try:
        for k in range(1, cfg.max_iters + 1):
            slack = lp.slack(X)
            viol = float(max(0.0, -slack.min())) if lp.n_d else 0.0
            obj = float(np.sum(c * X))
            feasible = viol <= cfg.feasibility_tol
            if feasible:
                best = max(best, obj)
                if cnorm == 0.0:
                    records.append({"iter": k, "objective": obj, "max_violation": viol, "step": 0.0})
                    break
                g = c
                if cfg.step_rule == "polyak" and cfg.polyak_target is not None:
                    step = max(cfg.polyak_target - obj, 0.0) / cnorm ** 2
                else:
                    step = gamma / np.sqrt(k)
            else:
                bad = np.flatnonzero(slack < -cfg.feasibility_tol)
                i = int(bad[rng.integers(len(bad))])
                r = lp.rows[i]
                g = -(r.u1[:, None, None] * r.u2[None, :, None] * r.w[None, None, :])
                g = np.where(free, g, 0.0)
                gn = float(np.linalg.norm(g))
                if cfg.step_rule == "polyak":
                    step = -slack[i] / gn ** 2 if gn > 0 else 0.0
                else:
                    step = gamma / np.sqrt(k)
            rec = {"iter": k, "objective": obj, "max_violation": viol, "step": float(step)}
            records.append(rec)
            if sink:
                sink.write(json.dumps(rec) + "\n")
            best_hist.append(best)
            if k > cfg.window and np.isfinite(best_hist[-cfg.window - 1]):
                old = best_hist[-cfg.window - 1]
                if best - old <= cfg.improvement_tol * max(abs(old), 1e-12):
                    break
            X = np.where(free, project_block(X + step * g), 0.0)
        else:
            log.warning("subgradient phase hit max_iters=%d without stabilizing", cfg.max_iters)
    finally:
        if sink:
            sink.close()
    return X, records


# ---------------------------------------------------------------------------
# certificates


def lagrangian_bound(lp, y) -> float:
    """Upper bound on max c.x valid for any y >= 0."""
    y = np.maximum(np.asarray(y, dtype=float), 0.0)
    rc = lp.c - lp.ATy(y)
    best = np.max(rc, axis=2, initial=0.0)
    best = np.maximum(best, 0.0) * lp.free_mask
    return float(y @ lp.rhs_eff + best.sum())


def infeasibility_margin(lp, y) -> float:
    """Positive value proves the coupling rows cannot all hold.

    For any structurally feasible x, y.(A x - b) >= sum_cells min(0, min_a (A^T y)) - y.b.
    """
    y = np.maximum(np.asarray(y, dtype=float), 0.0)
    aty = lp.ATy(y)
    low = np.minimum(np.min(aty, axis=2, initial=0.0), 0.0) * lp.free_mask
    return float(low.sum() - y @ lp.rhs_eff)


# ---------------------------------------------------------------------------
# restricted master


class _ColumnPool:
    def __init__(self, lp):
        self.lp = lp
        self.keys = np.zeros(0, dtype=np.int64)  # flat index into (n1, n2, A)
        self.seen = set()
        self.purged = set()

    def add(self, flat):
        flat = [int(f) for f in np.atleast_1d(flat) if int(f) not in self.seen]
        if flat:
            self.seen.update(flat)
            self.keys = np.concatenate([self.keys, np.array(flat, dtype=np.int64)])
        return len(flat)

    def keep(self, mask):
        """Drop columns outside ``mask``; a column is only ever dropped once,
        which rules out purge/re-price cycles."""
        mask = mask | np.isin(self.keys, np.fromiter(self.purged, np.int64, len(self.purged)))
        drop = [int(k) for k in self.keys[~mask]]
        self.seen.difference_update(drop)
        self.purged.update(drop)
        self.keys = self.keys[mask]

    def coupling(self, ix):
        """(n_d, len(ix)) coupling coefficients of columns ``ix``."""
        n1, n2, na = self.lp.shape
        i, rem = np.divmod(ix, n2 * na)
        j, a = np.divmod(rem, na)
        return self.lp.U1[:, i] * self.lp.U2[:, j] * self.lp.W[:, a], i * n2 + j


def _solve_master(lp, pool: _ColumnPool, cobj, penalty: float, rhs_shift=None):
    keys = pool.keys
    n_d = lp.n_d
    K = len(keys)
    A_cols, cell = pool.coupling(keys)
    # scale each coupling row to unit max so HiGHS keeps the small entries
    # (scale from the whole row, not just the pooled columns, to keep the
    # slack columns well conditioned)
    rs = lp.U1.max(axis=1) * lp.U2.max(axis=1) * np.abs(lp.W).max(axis=1)
    rs = np.where(rs > 0, 1.0 / np.maximum(rs, 1e-300), 1.0)
    A_cols = A_cols * rs[:, None]
    A_cols[np.abs(A_cols) < COEF_FLOOR] = 0.0
    cells, cell_row = np.unique(cell, return_inverse=True)
    A_d = sp.hstack([sp.csr_matrix(A_cols), -sp.diags(rs, format="csr")], format="csr")
    A_b = sp.hstack([sp.csr_matrix((np.ones(K), (cell_row, np.arange(K))), shape=(len(cells), K)),
                     sp.csr_matrix((len(cells), n_d))], format="csr")
    A = sp.vstack([A_d, A_b], format="csr")
    rhs = lp.rhs_eff if rhs_shift is None else lp.rhs_eff - rhs_shift
    b = np.concatenate([rhs * rs, np.ones(len(cells))])
    obj = np.concatenate([-cobj.ravel()[keys], np.full(n_d, penalty)])
    res = None
    for method, opts in MASTER_ATTEMPTS:
        res = linprog(obj, A_ub=A, b_ub=b, bounds=(0, None), method=method, options={**HIGHS_OPTIONS, **opts})
        if res.status == 0:
            break
        log.debug("master with %s failed (%s); retrying", method, res.message)
    if res.status != 0:
        raise RuntimeError(f"restricted master failed: {res.message}")
    marg = -res.ineqlin.marginals
    y = np.maximum(marg[:n_d], 0.0) * rs
    pi_cells = np.maximum(marg[n_d:], 0.0)
    pi = np.zeros(lp.shape[:2])
    pi.ravel()[cells] = pi_cells
    X = np.zeros(lp.shape)
    X.ravel()[keys] = res.x[:K]
    return X, res.x[K:], y, pi


def _solve_repaired(lp, pool, cobj, penalty, first=None):
    """Master solve, re-solved with tightened bounds if the exact rows are violated.

    Remaining violations come from coefficients HiGHS treats as zero; they
    are measured on the factored rows and subtracted from the bounds.
    """
    shift = np.zeros(lp.n_d)
    for k in range(4):
        if k == 0 and first is not None:
            X, s, y, pi = first
        else:
            X, s, y, pi = _solve_master(lp, pool, cobj, penalty, shift)
        over = np.maximum(lp.row_values(X) - s - lp.rhs_eff, 0.0)
        if over.max(initial=0.0) <= 1e-13:
            break
        shift = shift + over
    return X, s, y, pi


def _column_generation(lp, cobj, penalty, cfg: SolverConfig, x_warm=None, adaptive: bool = True):
    pool = _ColumnPool(lp)
    free = lp.free_mask[:, :, None]
    na = lp.shape[2]
    if x_warm is not None:
        xw = np.where(free, np.asarray(x_warm).reshape(lp.shape), 0.0)
        pool.add(np.flatnonzero(xw > 1e-9))
    # seed with the best positive-objective action of the most valuable cells
    cf = np.where(free, cobj, -np.inf).reshape(-1, na)
    flat = np.arange(len(cf)) * na + np.argmax(cf, axis=1)
    top = cf.max(axis=1)
    good = np.flatnonzero(top > cfg.pricing_tol)
    pool.add(flat[good[np.argsort(-top[good])][: cfg.columns_per_round]])
    if len(pool.keys) == 0:
        pool.add([int(np.flatnonzero(np.broadcast_to(free, lp.shape).ravel())[0])])
    rounds = 0
    y_best, best_bound = None, np.inf
    while True:
        rounds += 1
        X, s, y, pi = _solve_master(lp, pool, cobj, penalty)
        base = np.where(free, cobj - lp.ATy(y), -np.inf)
        bound = float(y @ lp.rhs_eff + np.maximum(base.max(axis=2), 0.0).sum())
        if bound < best_bound:
            best_bound, y_best = bound, y
        gap = best_bound - float(np.sum(cobj * X)) + penalty * float(s.sum())
        if s.sum() <= 1e-12 and gap <= cfg.stop_gap_ratio * cfg.gap_tol:
            log.debug("colgen round %d: gap %.3g, done", rounds, gap)
            break
        # smoothed pricing around the best dual point found so far
        cand = _price(lp, pool, cobj, 0.5 * (y + y_best), free, cfg.pricing_tol) if y_best is not y else np.zeros(0, int)
        if len(cand) == 0:
            rc = (base - pi[:, :, None]).ravel()
            rc[pool.keys] = -np.inf
            best = np.argmax(rc.reshape(-1, na), axis=1)
            flat = np.arange(len(best)) * na + best
            cand = flat[rc[flat] > cfg.pricing_tol]
        log.debug("colgen round %d: %d columns, %d priced in, gap %.3g", rounds, len(pool.keys), len(cand), gap)
        if adaptive and len(cand) == 0 and s.sum() > 1e-12 and y.max(initial=0.0) >= 0.999 * penalty \
                and penalty < MAX_PENALTY_FACTOR * cfg.elastic_penalty * max(1.0, float(np.abs(cobj).max())):
            # the elastic penalty caps a multiplier: raise it and continue
            penalty *= 10.0
            log.debug("colgen round %d: raising elastic penalty to %.3g", rounds, penalty)
            best_bound, y_best = np.inf, None
            continue
        if len(cand) == 0 or rounds >= cfg.max_rounds:
            break
        if len(cand) > cfg.columns_per_round:
            rc_c = (base.ravel())[cand]
            cand = cand[np.argpartition(-rc_c, cfg.columns_per_round)[: cfg.columns_per_round]]
        # drop idle columns whose reduced cost is clearly negative
        in_pool = (base - pi[:, :, None]).ravel()[pool.keys]
        pool.keep((X.ravel()[pool.keys] > 0) | (in_pool > -cfg.purge_tol))
        pool.add(cand)
    X, s, y, _ = _solve_repaired(lp, pool, cobj, penalty, first=(X, s, y, pi))
    if y_best is not None and lagrangian_bound(lp, y_best) < lagrangian_bound(lp, y):
        y = y_best
    return X, s, y, rounds, penalty


def _price(lp, pool, cobj, y, free, tol):
    """Columns beating every pooled action of their cell in the Lagrangian at ``y``."""
    na = lp.shape[2]
    base = np.where(free, cobj - lp.ATy(y), -np.inf).reshape(-1, na)
    pooled = np.full(base.size, -np.inf)
    pooled[pool.keys] = base.ravel()[pool.keys]
    floor = np.maximum(pooled.reshape(-1, na).max(axis=1), 0.0)
    other = base.ravel().copy()
    other[pool.keys] = -np.inf
    other = other.reshape(-1, na)
    best = np.argmax(other, axis=1)
    val = other[np.arange(len(best)), best]
    cells = np.flatnonzero(val > floor + tol)
    return cells * na + best[cells]


def _solve_full(lp, cobj, penalty):
    n1, n2, na = lp.shape
    keys = np.flatnonzero(np.repeat(lp.free_mask.ravel(), na))
    pool = _ColumnPool(lp)
    pool.add(keys)
    X, s, y, _ = _solve_repaired(lp, pool, cobj, penalty)
    return X, s, y, 1


def _phase_one(lp, cfg, x_warm=None):
    zero = np.zeros(lp.shape)
    if cfg.refine_method == "full":
        X, s, y, rounds = _solve_full(lp, zero, 1.0)
    else:
        X, s, y, rounds, _ = _column_generation(lp, zero, 1.0, cfg, x_warm, adaptive=False)
    return X, float(s.sum()), y, rounds


def _finish(lp, X, y, cfg, rounds, t0, records):
    X = project_block(np.clip(X, 0.0, 1.0)) * lp.free_mask[:, :, None]
    obj = lp.objective(X)
    bound = lagrangian_bound(lp, y)
    slack = lp.slack(X)
    viol = float(max(0.0, -slack.min())) if lp.n_d else 0.0
    scale = np.maximum(1.0, np.abs(lp.rhs_eff))
    active = [i for i in range(lp.n_d) if abs(slack[i]) / scale[i] <= cfg.activity_tol]
    return LPSolution(X, obj, y, bound, bound - obj, viol, active, rounds, time.perf_counter() - t0,
                      "optimal", records)


def refine_exact(lp, x_warm=None, config: SolverConfig | None = None, records=None) -> LPSolution:
    """Exact solve with dense-row duals and a recomputed duality gap."""
    cfg = config or SolverConfig()
    t0 = time.perf_counter()
    if lp.n_d == 0:
        X = np.zeros(lp.shape)
        best = np.argmax(lp.c, axis=2)
        take = (np.max(lp.c, axis=2) > 0) & lp.free_mask
        i, j = np.nonzero(take)
        X[i, j, best[i, j]] = 1.0
        return _finish(lp, X, np.zeros(0), cfg, 0, t0, records or [])
    penalty = cfg.elastic_penalty * max(1.0, float(np.abs(lp.c).max()))
    if cfg.refine_method == "full":
        X, s, y, rounds = _solve_full(lp, lp.c, penalty)
    else:
        X, s, y, rounds, penalty = _column_generation(lp, lp.c, penalty, cfg, x_warm)
    if s.sum() > 1e-9:
        # the elastic master could not close the rows: confirm with phase one
        Xf, infeas, yf, _ = _phase_one(lp, cfg, X)
        if infeas > 1e-9:
            cert = {"y": yf, "phase_one_value": infeas, "margin": infeasibility_margin(lp, yf)}
            raise InfeasibleError(f"coupling rows infeasible (phase-one value {infeas:.3g})", cert)
        raise RuntimeError("elastic penalty too small; increase SolverConfig.elastic_penalty")
    sol = _finish(lp, X, y, cfg, rounds, t0, records or [])
    if sol.gap > cfg.gap_tol:
        log.warning("certified gap %.3g exceeds gap_tol %.3g", sol.gap, cfg.gap_tol)
        sol.status = "gap_exceeded"
    return sol


def solve(lp, config: SolverConfig | None = None, x0=None, warm_subgradient: bool = True) -> LPSolution:
    """Subgradient warm start followed by exact refinement."""
    cfg = config or SolverConfig()
    records = []
    x_warm = x0
    if warm_subgradient:
        x_warm, records = subgradient_phase(lp, cfg, x0)
    return refine_exact(lp, x_warm, cfg, records)


@dataclass
class Feasibility:
    feasible: bool
    x: np.ndarray | None = None
    certificate: dict | None = None

    def __bool__(self):
        return self.feasible


def check_feasible(lp, config: SolverConfig | None = None, x_warm=None, tol: float = 1e-9) -> Feasibility:
    """Phase-one test of the coupling rows.

    Returns a feasible point, or a multiplier vector ``y`` whose
    :func:`infeasibility_margin` is positive.
    """
    cfg = config or SolverConfig()
    if lp.n_d == 0:
        return Feasibility(True, np.zeros(lp.shape))
    X, infeas, y, _ = _phase_one(lp, cfg, x_warm)
    if infeas <= tol:
        return Feasibility(True, project_block(np.clip(X, 0, 1)) * lp.free_mask[:, :, None])
    return Feasibility(False, None, {"y": y, "phase_one_value": infeas, "margin": infeasibility_margin(lp, y)})


def config_dict(cfg: SolverConfig) -> dict:
    return asdict(cfg)
