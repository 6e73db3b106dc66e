"""Assembly of the discretized testing problem as a block-angular LP.

Variables are ``x[i, j, a] = m_{r, s_a}`` for rectangle ``r = (i, j)`` and
the free actions ``s_1..s_A`` of an :class:`~subpop_lp.actions.ActionSpace`;
the do-nothing action carries the remainder ``1 - sum_a x[i, j, a]``.

Every coupling ("dense") row is a probability-weighted sum under one
non-centrality point, so its coefficient tensor factors as
``u1[i] * u2[j] * w[a]``.  Rows are stored in that factored form; the full
coefficient vector is never formed except for tiny instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .actions import DECISION, TESTING, ActionSpace
from .kernel import RectGrid, prior_risk, risk_arrays
from .losses import DecisionLoss, Loss
from .priors import Prior
from .trial import H0C, DerivedScale, NullSet, TrialDesign, true_nulls

DEFAULT_ALPHA_MARGIN = 1e-4
DEFAULT_G_TARGET = 105


def _as_scale(design) -> DerivedScale:
    if isinstance(design, TrialDesign):
        return design.scale()
    if isinstance(design, DerivedScale):
        return design
    raise TypeError("expected a TrialDesign or DerivedScale")


# ---------------------------------------------------------------------------
# constraint grid


def _grid_count(b: float, tau_g: float, rho_max: float) -> int:
    k_axis = math.floor(b / tau_g + 1e-12)
    k_diag = math.floor(b / (rho_max * tau_g) + 1e-12)
    return 2 * (2 * k_axis + 1) + (2 * k_diag + 1) - 2


def spacing_for_count(b: float, rho: tuple[float, float], target: int) -> float:
    """A spacing tau_G giving exactly ``target`` boundary points.

    The count is a step function of tau_G that jumps at ``b/k`` and
    ``b/(rho_max k)``.  The midpoint of the widest interval of spacings that
    hits the target is returned, so small perturbations keep the count.
    """
    rho_max = max(rho)
    kmax = 4 * target + 8
    cuts = sorted({b / k for k in range(1, kmax)} | {b / (rho_max * k) for k in range(1, kmax)}, reverse=True)
    best = None
    for hi, lo in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (hi + lo)
        if _grid_count(b, mid, rho_max) == target:
            if best is None or hi - lo > best[0] - best[1]:
                best = (hi, lo)
    if best is None:
        raise ValueError(f"no constraint-grid spacing yields exactly {target} points")
    return 0.5 * (best[0] + best[1])


@dataclass(frozen=True)
class ConstraintGrid:
    """Points on the three null-boundary lines where FWER rows are imposed."""

    points: tuple  # of (delta1, delta2, NullSet)
    tau_g: float | None = None
    b: float | None = None

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def coords(self) -> np.ndarray:
        return np.array([(p[0], p[1]) for p in self.points], dtype=float).reshape(-1, 2)

    @classmethod
    def build(cls, scale: DerivedScale, b: float, tau_g: float | None = None,
              target: int = DEFAULT_G_TARGET) -> "ConstraintGrid":
        """Lines {d1 = 0}, {d2 = 0}, {rho.d = 0} sampled every tau_G inside [-b, b]^2.

        With ``tau_g=None`` the spacing is chosen to give ``target`` points.
        """
        rho1, rho2 = scale.rho
        if tau_g is None:
            tau_g = spacing_for_count(b, scale.rho, target)
        if tau_g <= 0:
            raise ValueError("tau_g must be positive")
        pts = {}

        def add(d1, d2):
            d1 = 0.0 if abs(d1) < 1e-14 else float(d1)
            d2 = 0.0 if abs(d2) < 1e-14 else float(d2)
            key = (round(d1, 12), round(d2, 12))
            if key not in pts:
                pts[key] = (d1, d2, true_nulls(scale, d1, d2))

        k_axis = math.floor(b / tau_g + 1e-12)
        for k in range(-k_axis, k_axis + 1):
            add(k * tau_g, 0.0)
            add(0.0, k * tau_g)
        k_diag = math.floor(b / (max(rho1, rho2) * tau_g) + 1e-12)
        for k in range(-k_diag, k_diag + 1):
            add(rho2 * k * tau_g, -rho1 * k * tau_g)
        ordered = tuple(pts[k] for k in sorted(pts))
        return cls(ordered, float(tau_g), float(b))

    @classmethod
    def from_points(cls, scale: DerivedScale, coords) -> "ConstraintGrid":
        pts = []
        for d1, d2 in coords:
            ns = true_nulls(scale, d1, d2)
            if not ns:
                raise ValueError(f"({d1}, {d2}) has no true null hypothesis")
            pts.append((float(d1), float(d2), ns))
        return cls(tuple(pts))

    @classmethod
    def global_null(cls, scale: DerivedScale) -> "ConstraintGrid":
        return cls.from_points(scale, [(0.0, 0.0)])

    def with_points(self, scale: DerivedScale, coords) -> "ConstraintGrid":
        have = {(round(p[0], 12), round(p[1], 12)) for p in self.points}
        extra = [c for c in coords if (round(c[0], 12), round(c[1], 12)) not in have]
        if not extra:
            return self
        return ConstraintGrid(self.points + ConstraintGrid.from_points(scale, extra).points, self.tau_g, self.b)


# ---------------------------------------------------------------------------
# rows


@dataclass(frozen=True)
class DenseRow:
    """Coupling row ``sum_{i,j,a} u1[i] u2[j] w[a] x[i,j,a] <= rhs``."""

    u1: np.ndarray
    u2: np.ndarray
    w: np.ndarray
    rhs: float
    tag: str
    point: tuple = ()

    def value(self, X: np.ndarray) -> float:
        return float(self.u1 @ (X @ self.w) @ self.u2)

    def coefficients(self) -> np.ndarray:
        return (self.u1[:, None, None] * self.u2[None, :, None] * self.w[None, None, :]).ravel()


def _mask(space: ActionSpace, pred) -> np.ndarray:
    return np.array([1.0 if pred(a) else 0.0 for a in space.actions[1:]])


def build_fwer_row(grid_point, rect_grid: RectGrid, scale: DerivedScale,
                   alpha_margin: float = DEFAULT_ALPHA_MARGIN, space: ActionSpace = TESTING) -> DenseRow:
    d1, d2 = grid_point[0], grid_point[1]
    nulls = grid_point[2] if len(grid_point) > 2 else true_nulls(scale, d1, d2)
    H = nulls.as_set() if isinstance(nulls, NullSet) else frozenset(nulls)
    if not H:
        raise ValueError("FWER row requested at a point with no true null")
    u1, u2 = rect_grid.axis_probs(d1, d2)
    w = _mask(space, lambda s: bool(s & H))
    return DenseRow(u1, u2, w, scale.alpha - alpha_margin, "FWER", (float(d1), float(d2)))


def build_power_row(rect_grid: RectGrid, scale: DerivedScale, power: float | None = None,
                    space: ActionSpace = TESTING) -> DenseRow:
    """Power for H0C at (d1min, d2min) >= power, stored negated."""
    target = 1.0 - scale.beta if power is None else power
    u1, u2 = rect_grid.axis_probs(*scale.delta_min)
    w = -_mask(space, lambda s: H0C in s)
    return DenseRow(u1, u2, w, -target, "POWER", scale.delta_min)


def build_risk_row(rect_grid: RectGrid, loss: Loss, delta, cap: float, space: ActionSpace = TESTING) -> DenseRow:
    """Risk at a point alternative ``delta`` capped at ``cap``.

    The do-nothing action is used outside the grid, so the risk is
    ``L(none; delta) + row . x``.
    """
    d1, d2 = delta
    base = float(loss(space.actions[0], d1, d2))
    u1, u2 = rect_grid.axis_probs(d1, d2)
    w = np.array([float(loss(a, d1, d2)) - base for a in space.actions[1:]])
    return DenseRow(u1, u2, w, cap - base, "RISK", (float(d1), float(d2)))


def decision_relevant(scale: DerivedScale, d1: float, d2: float, strict: bool = False):
    """Per nonempty recommendation, does it count as an error at (d1, d2)?"""
    if strict:
        bad = {k for k, d in ((1, d1), (2, d2)) if d <= 0}
        return {a: bool(a & bad) for a in DECISION.actions[1:]}
    agg = {frozenset({1}): d1 <= 0, frozenset({2}): d2 <= 0,
           frozenset({1, 2}): scale.rho1 * d1 + scale.rho2 * d2 <= 0}
    return {a: bool(agg[a]) for a in DECISION.actions[1:]}


def build_decision_row(grid_point, rect_grid: RectGrid, scale: DerivedScale,
                       alpha_margin: float = DEFAULT_ALPHA_MARGIN, strict: bool = False) -> DenseRow | None:
    d1, d2 = grid_point[0], grid_point[1]
    rel = decision_relevant(scale, d1, d2, strict)
    w = np.array([1.0 if rel[a] else 0.0 for a in DECISION.actions[1:]])
    if not w.any():
        return None
    u1, u2 = rect_grid.axis_probs(d1, d2)
    return DenseRow(u1, u2, w, scale.alpha - alpha_margin, "DECISION", (float(d1), float(d2)))


# ---------------------------------------------------------------------------
# the LP


@dataclass
class SparseLP:
    """max c.x  s.t.  dense rows <= rhs,  per-cell sum_a x <= 1,  x >= 0.

    ``c`` and any iterate ``X`` have shape ``(n1, n2, A)``.  Cells outside
    ``free`` (when given) are held at ``x_fixed`` and excluded from the
    optimization; their contribution is folded into the row bounds.
    """

    grid: RectGrid
    space: ActionSpace
    c: np.ndarray
    rows: list
    const: float = 0.0
    free: np.ndarray | None = None
    x_fixed: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        expect = (*self.grid.shape, self.space.n_free)
        if self.c.shape != expect:
            raise ValueError(f"objective shape {self.c.shape} does not match grid/actions {expect}")
        for r in self.rows:
            if r.u1.shape != (expect[0],) or r.u2.shape != (expect[1],) or r.w.shape != (expect[2],):
                raise ValueError(f"row {r.tag}{r.point} does not match the grid")
        if self.free is not None:
            self.free = np.asarray(self.free, dtype=bool)
            if self.x_fixed is None:
                self.x_fixed = np.zeros_like(self.c)
            self.x_fixed = np.where(self.free[:, :, None], 0.0, self.x_fixed)
        self._refresh()

    def _refresh(self):
        n = len(self.rows)
        self.U1 = np.array([r.u1 for r in self.rows]).reshape(n, self.grid.shape[0])
        self.U2 = np.array([r.u2 for r in self.rows]).reshape(n, self.grid.shape[1])
        self.W = np.array([r.w for r in self.rows]).reshape(n, self.space.n_free)
        self.rhs = np.array([r.rhs for r in self.rows], dtype=float)
        # rows sharing an action mask are evaluated together
        groups = {}
        for i, r in enumerate(self.rows):
            groups.setdefault(r.w.tobytes(), []).append(i)
        self._groups = [(np.array(ix), self.rows[ix[0]].w) for ix in groups.values()]
        if self.free is not None:
            self.rhs_eff = self.rhs - self._raw_values(self.x_fixed)
        else:
            self.rhs_eff = self.rhs

    # dimensions -----------------------------------------------------------
    @property
    def shape(self) -> tuple[int, int, int]:
        return self.c.shape

    @property
    def n_cells(self) -> int:
        return self.grid.n_rects if self.free is None else int(self.free.sum())

    @property
    def n_v(self) -> int:
        return self.n_cells * self.space.n_free

    @property
    def n_d(self) -> int:
        return len(self.rows)

    @property
    def n_s(self) -> int:
        # per-cell sum rows plus nonnegativity bounds
        return self.n_cells + self.n_v

    def dims(self) -> tuple[int, int, int]:
        return (self.n_v, self.n_d, self.n_s)

    @property
    def free_mask(self) -> np.ndarray:
        if self.free is None:
            return np.ones(self.grid.shape, dtype=bool)
        return self.free

    # linear algebra -------------------------------------------------------
    def _raw_values(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(self.n_d)
        for ix, w in self._groups:
            out[ix] = np.sum((self.U1[ix] @ (X @ w)) * self.U2[ix], axis=1)
        return out

    def row_values(self, X: np.ndarray) -> np.ndarray:
        """Dense-row activities of the free part ``X`` (compare with rhs_eff)."""
        X = self._free_part(X)
        return self._raw_values(X)

    def slack(self, X: np.ndarray) -> np.ndarray:
        return self.rhs_eff - self.row_values(X)

    def max_violation(self, X: np.ndarray) -> float:
        return float(max(0.0, np.max(-self.slack(X)))) if self.n_d else 0.0

    def ATy(self, y: np.ndarray) -> np.ndarray:
        """Transpose product: sum_i y_i * row_i as an (n1, n2, A) array."""
        out = np.zeros(self.shape)
        y = np.asarray(y, dtype=float)
        for ix, w in self._groups:
            yy = y[ix]
            nz = yy != 0
            if not nz.any():
                continue
            K = (self.U1[ix][nz] * yy[nz, None]).T @ self.U2[ix][nz]
            out += K[:, :, None] * w[None, None, :]
        return out

    def _free_part(self, X):
        X = np.asarray(X, dtype=float).reshape(self.shape)
        if self.free is not None:
            X = np.where(self.free[:, :, None], X, 0.0)
        return X

    def full_x(self, X: np.ndarray) -> np.ndarray:
        """Free part plus the fixed cells."""
        X = self._free_part(X)
        return X if self.free is None else X + self.x_fixed

    def objective(self, X: np.ndarray) -> float:
        return float(np.sum(self.c * self._free_part(X)))

    def bayes_risk(self, X: np.ndarray) -> float:
        """Risk of the procedure: E[L(none)] minus the objective (fixed cells included)."""
        return self.const - float(np.sum(self.c * self.full_x(X)))

    def dense_matrix(self) -> np.ndarray:
        """Materialized (n_d, n1*n2*A) coupling matrix; tiny instances only."""
        if self.n_d * self.c.size > 5e7:
            raise MemoryError("dense materialization refused for a large LP")
        A = np.array([r.coefficients() for r in self.rows]).reshape(self.n_d, self.c.size)
        if self.free is not None:
            A = A * np.repeat(self.free.ravel(), self.space.n_free)[None, :]
        return A

    def with_rows(self, rows, **meta) -> "SparseLP":
        new = replace(self, rows=list(self.rows) + list(rows), meta={**self.meta, **meta})
        return new

    def with_rhs(self, tag: str, rhs: float) -> "SparseLP":
        rows = [replace(r, rhs=rhs) if r.tag == tag else r for r in self.rows]
        meta = dict(self.meta)
        if tag == "POWER":
            meta["power"] = -rhs
        return replace(self, rows=rows, meta=meta)

    def write_lp(self, path) -> None:
        """Write the materialized LP in CPLEX LP text format."""
        A = self.dense_matrix()
        n1, n2, na = self.shape
        names = [f"x_{i}_{j}_{a + 1}" for i in range(n1) for j in range(n2) for a in range(na)]
        free = np.repeat(self.free_mask.ravel(), na)

        def expr(coefs):
            parts = [f"{'+' if v >= 0 else '-'} {abs(v):.17g} {names[k]}" for k, v in enumerate(coefs) if v != 0 and free[k]]
            return " ".join(parts) if parts else "0 " + names[0]

        lines = ["\\ block-angular testing LP", "Maximize", " obj: " + expr(self.c.ravel()), "Subject To"]
        for i, r in enumerate(self.rows):
            lines.append(f" d{i}_{r.tag}: {expr(A[i])} <= {self.rhs_eff[i]:.17g}")
        for i in range(n1):
            for j in range(n2):
                if self.free_mask[i, j]:
                    base = (i * n2 + j) * na
                    lines.append(f" s_{i}_{j}: " + " + ".join(names[base + a] for a in range(na)) + " <= 1")
        lines.append("End")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def objective_arrays(grid: RectGrid, loss: Loss, prior: Prior, space: ActionSpace):
    """Maximization coefficients ``c = risk(none) - risk(s)`` and the risk baseline."""
    loss.check_action(space.actions[0])
    R = risk_arrays(grid, loss, prior, space.actions)
    c = R[:, :, :1] - R[:, :, 1:]
    const = prior_risk(loss, prior, space.actions[0])
    return c, const


def build_lp(design, grid: RectGrid, constraint_grid: ConstraintGrid, loss: Loss, prior: Prior,
             extra_rows=(), power: float | None = None, alpha_margin: float = DEFAULT_ALPHA_MARGIN,
             objective=None, include_power: bool = True) -> SparseLP:
    """Bayes-risk LP with FWER rows on ``constraint_grid`` and the H0C power row.

    ``objective`` may pass precomputed ``(c, const)`` to reuse coefficients
    across solves.
    """
    scale = _as_scale(design)
    if loss.space is not TESTING and not loss.is_zero:
        for a in TESTING.actions:
            loss.check_action(a)
    c, const = objective if objective is not None else objective_arrays(grid, loss, prior, TESTING)
    rows = [build_fwer_row(p, grid, scale, alpha_margin) for p in constraint_grid]
    if include_power:
        rows.append(build_power_row(grid, scale, power))
    rows.extend(extra_rows)
    meta = {"kind": "bayes", "power": 1.0 - scale.beta if power is None else power,
            "alpha": scale.alpha, "alpha_margin": alpha_margin}
    return SparseLP(grid, TESTING, c, rows, const, meta=meta)


def build_decision_lp(design, grid: RectGrid, constraint_grid: ConstraintGrid, loss: DecisionLoss,
                      prior: Prior, alpha_margin: float = DEFAULT_ALPHA_MARGIN, strict: bool = False,
                      objective=None) -> SparseLP:
    """Recommendation LP: actions (none, {1}, {2}, {1,2}) and aggregate-harm rows."""
    if not isinstance(loss, DecisionLoss):
        raise TypeError("decision LP needs a DecisionLoss")
    scale = _as_scale(design)
    c, const = objective if objective is not None else objective_arrays(grid, loss, prior, DECISION)
    rows = []
    for p in constraint_grid:
        r = build_decision_row(p, grid, scale, alpha_margin, strict)
        if r is not None:
            rows.append(r)
    meta = {"kind": "decision", "alpha": scale.alpha, "alpha_margin": alpha_margin, "strict": strict}
    return SparseLP(grid, DECISION, c, rows, const, meta=meta)
