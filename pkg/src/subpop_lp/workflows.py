"""End-to-end workflows: configuration, solve/verify/bound pipelines and exports."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import analysis
from .actions import DECISION, TESTING
from .kernel import RectGrid
from .losses import DecisionLoss, make_loss
from .lpbuild import (ConstraintGrid, SparseLP, build_decision_lp, build_fwer_row, build_power_row,
                      build_risk_row, objective_arrays)
from .priors import Prior, builtin_prior
from .procedures import (DiscreteProcedure, bergmann_hommel_procedure, evaluate_bayes_risk, power_table, rosenbaum,
                         song_chi)
from .solver import InfeasibleError, SolverConfig, check_feasible, config_dict, solve
from .trial import H01, H02, H0C, TrialDesign, n_min

log = logging.getLogger(__name__)

WORKERS_ENV = "SUBPOP_LP_WORKERS"
POWER_CAP_MARGIN = 1e-6

# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    """Everything a workflow needs; serializes to and from JSON."""

    workflow: str = "bayes"
    # design
    p1: float = 0.5
    sigma2: tuple = ((1.0, 1.0), (1.0, 1.0))
    delta_min: float = 1.0
    alpha: float = 0.05
    n: float | None = None  # None: n_factor * n_min
    n_factor: float = 1.0
    n_min_power: float = 0.9
    # grid
    tau: float = 0.1
    tau_g: float | None = None
    g_target: int = 105
    b: float = 5.0
    b_prime: float = 8.0
    fine_tau: float = 1e-4
    # objective
    loss: str = "indicator"
    loss_params: dict = field(default_factory=dict)
    prior: str = "sym"
    prior_components: dict | None = None
    power: float = 0.9
    alpha_margin: float = 1e-4
    power_slack: float = 0.005
    bound_relaxations: tuple = (0.002, 0.005, 0.01)
    # certification
    cutting_rounds: int = 12
    scan_step: float = 1e-3
    verify: bool = True
    bound: bool = True
    # solver
    solver: dict = field(default_factory=dict)
    subgradient_warm_start: bool = False
    # io
    output_dir: str | None = None
    seed: int = 0

    def __post_init__(self):
        self.sigma2 = tuple(tuple(float(v) for v in row) for row in self.sigma2)
        self.bound_relaxations = tuple(float(v) for v in self.bound_relaxations)
        self.validate()

    def validate(self) -> None:
        if self.workflow not in WORKFLOWS:
            raise ValueError(f"unknown workflow {self.workflow!r}; choose from {sorted(WORKFLOWS)}")
        if not 0 < self.p1 < 1:
            raise ValueError("p1 must lie in (0, 1)")
        if not 0 < self.power < 1:
            raise ValueError("power must lie in (0, 1)")
        if self.tau <= 0 or self.b <= 0 or self.fine_tau <= 0:
            raise ValueError("tau, b and fine_tau must be positive")
        if self.b_prime <= self.b:
            raise ValueError("b_prime must exceed b")
        if self.n is not None and self.n <= 0:
            raise ValueError("n must be positive")
        if self.n_factor <= 0:
            raise ValueError("n_factor must be positive")
        if self.prior_components is None and self.prior not in ("sym", "asym", "sym-normal", "asym-normal",
                                                                  "subpop-only"):
            raise ValueError(f"unknown prior {self.prior!r}")
        if self.loss not in ("indicator", "proportional", "decision", "zero"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.workflow == "decision" and self.loss != "decision":
            raise ValueError("the decision workflow needs loss='decision'")
        SolverConfig(**self.solver_fields())
        if self.tau < 0.05:
            log.warning("tau=%g is a full-scale grid; expect long run times", self.tau)

    def solver_fields(self) -> dict:
        out = dict(self.solver)
        out.setdefault("rng_seed", self.seed)
        return out

    def solver_config(self) -> SolverConfig:
        return SolverConfig(**self.solver_fields())

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["sigma2"] = [list(r) for r in self.sigma2]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    # derived objects -------------------------------------------------------
    def design(self) -> TrialDesign:
        base = TrialDesign(self.p1, self.sigma2, 1.0, self.delta_min, self.alpha, 1.0 - self.n_min_power)
        n = self.n if self.n is not None else self.n_factor * n_min(base)
        return base.with_n(n)

    def n_min(self) -> float:
        return n_min(TrialDesign(self.p1, self.sigma2, 1.0, self.delta_min, self.alpha, 1.0 - self.n_min_power))


PRESET_NAMES = ("sym", "asym", "sym-normal", "asym-normal")


def load_preset(name: str, **overrides) -> RunConfig:
    """One of the shipped JSON presets, with field overrides."""
    if name not in PRESET_NAMES:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    text = resources.files("subpop_lp").joinpath("presets", f"{name}.json").read_text()
    d = json.loads(text)
    d.update(overrides)
    return RunConfig.from_dict(d)


# ---------------------------------------------------------------------------
# shared context with coefficient caching

_CACHE: dict = {}


def _cached(key, build):
    try:
        hash(key)
    except TypeError:
        return build()
    if key not in _CACHE:
        _CACHE[key] = build()
    return _CACHE[key]


def clear_cache() -> None:
    _CACHE.clear()


@dataclass
class Context:
    config: RunConfig
    design: TrialDesign
    scale: object
    grid: RectGrid
    cgrid: ConstraintGrid
    loss: object
    prior: Prior

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "Context":
        design = cfg.design()
        scale = design.scale()
        grid = RectGrid(cfg.tau, cfg.b)
        cgrid = _cached(("cgrid", scale, cfg.b, cfg.tau_g, cfg.g_target),
                        lambda: ConstraintGrid.build(scale, cfg.b, tau_g=cfg.tau_g, target=cfg.g_target))
        if cfg.prior_components is not None:
            prior = Prior.from_dict(cfg.prior_components)
        else:
            prior = builtin_prior(cfg.prior, scale)
        loss = make_loss(cfg.loss, scale, **cfg.loss_params)
        return cls(cfg, design, scale, grid, cgrid, loss, prior)

    def objective(self, space=TESTING):
        return _cached(("obj", self.scale, self.grid, self.loss, self.prior, space.name),
                       lambda: objective_arrays(self.grid, self.loss, self.prior, space))

    def fwer_rows(self, cgrid=None):
        cg = self.cgrid if cgrid is None else cgrid
        key = ("fwer", self.scale, self.grid, tuple(map(tuple, cg.coords)), self.config.alpha_margin)
        return _cached(key, lambda: [build_fwer_row(p, self.grid, self.scale, self.config.alpha_margin) for p in cg])

    def bayes_lp(self, power: float, cgrid=None) -> SparseLP:
        rows = list(self.fwer_rows(cgrid)) + [build_power_row(self.grid, self.scale, power)]
        c, const = self.objective()
        meta = {"kind": "bayes", "power": power, "alpha": self.scale.alpha, "alpha_margin": self.config.alpha_margin}
        return SparseLP(self.grid, TESTING, c, rows, const, meta=meta)


def max_power(lp: SparseLP, config: SolverConfig | None = None) -> float:
    """Largest H0C power at (d1min, d2min) compatible with the FWER rows of ``lp``."""
    prow = next(r for r in lp.rows if r.tag == "POWER")
    c = -(prow.u1[:, None, None] * prow.u2[None, :, None] * prow.w[None, None, :])
    rows = [r for r in lp.rows if r.tag == "FWER"]
    aux = SparseLP(lp.grid, lp.space, c, rows, 0.0, lp.free, lp.x_fixed, meta={"kind": "max_power"})
    sol = solve(aux, config, warm_subgradient=False)
    fixed = 0.0 if lp.x_fixed is None else float(np.sum(c * lp.x_fixed))
    return sol.objective + fixed


def _power_of(lp: SparseLP) -> float:
    return -next(r.rhs for r in lp.rows if r.tag == "POWER")


# ---------------------------------------------------------------------------
# reports


def _versions() -> dict:
    import scipy

    try:
        from importlib.metadata import version

        pkg = version("subpop-lp")
    except Exception:  # not installed
        pkg = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "package": pkg}


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (frozenset, set)):
        return sorted(str(v) for v in o)
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    return o


@dataclass
class RunReport:
    """Workflow output.  Heavy artifacts are attached but not serialized."""

    workflow: str
    config: dict
    status: str = "ok"
    flags: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    certification: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    procedure: DiscreteProcedure | None = field(default=None, repr=False, compare=False)
    solution: object = field(default=None, repr=False, compare=False)
    lp: SparseLP | None = field(default=None, repr=False, compare=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        return _jsonable({"workflow": self.workflow, "config": self.config, "status": self.status,
                          "flags": self.flags, "summary": self.summary, "certification": self.certification,
                          "tables": self.tables, "provenance": self.provenance})

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    def fingerprint(self) -> str:
        """Hash of everything except timings, for reproducibility checks."""
        d = self.to_dict()
        d["provenance"] = {k: v for k, v in d["provenance"].items() if k != "wall_time"}
        d["certification"] = _strip_times(d["certification"])
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def _strip_times(d):
    if isinstance(d, dict):
        return {k: _strip_times(v) for k, v in d.items() if k not in ("wall_time",)}
    if isinstance(d, list):
        return [_strip_times(v) for v in d]
    return d


def _new_report(cfg: RunConfig, workflow: str) -> RunReport:
    return RunReport(workflow, cfg.to_dict(), provenance={"config_hash": cfg.digest(), "versions": _versions()})


def _finalize(report: RunReport, cfg: RunConfig, t0: float) -> RunReport:
    report.provenance["wall_time"] = time.perf_counter() - t0
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        cfg.to_json(out / "config.json")
        report.to_json(out / f"{report.workflow}_report.json")
        if report.procedure is not None:
            export_regions(report.procedure, out / f"{report.workflow}_regions.csv")
            report.procedure.to_json(out / f"{report.workflow}_procedure.json")
    return report


def _active_rows(lp: SparseLP, sol) -> list:
    out = []
    for i in sol.active_set:
        r = lp.rows[i]
        out.append({"tag": r.tag, "point": list(r.point), "dual": float(sol.duals[i])})
    return out


# ---------------------------------------------------------------------------
# Bayes pipeline


def _solve_capped(ctx: Context, lp: SparseLP, scfg: SolverConfig, x0, flags: list, warm: bool):
    """Solve; if the power row alone makes it infeasible and the shortfall is
    within ``power_slack``, lower the target to the largest attainable power."""
    try:
        return solve(lp, scfg, x0, warm_subgradient=warm), lp
    except InfeasibleError as err:
        target = _power_of(lp)
        p_max = max_power(lp, scfg)
        if target - p_max > ctx.config.power_slack:
            err.certificate = {**(err.certificate or {}), "max_power": p_max, "target_power": target}
            raise
        capped = p_max - POWER_CAP_MARGIN
        log.warning("power %.6f unattainable; capping at %.6f", target, capped)
        if "power_target_capped" not in flags:
            flags.append("power_target_capped")
        lp = lp.with_rhs("POWER", -capped)
        lp.meta["power"] = capped
        return solve(lp, scfg, x0, warm_subgradient=False), lp


def _fwer_target(cfg: RunConfig) -> float:
    return cfg.alpha - analysis.SQRT_2_OVER_PI * cfg.fine_tau - 1e-5


@dataclass
class CuttingPlaneResult:
    procedure: DiscreteProcedure
    solution: object
    lp: SparseLP
    base_solution: object
    base_lp: SparseLP
    fwer: object
    flags: list


def cutting_plane_solve(ctx: Context, power: float, cgrid=None, x0=None, history=None):
    """Solve the Bayes LP, then add or tighten FWER rows until the monotone
    extension of the optimum passes continuum verification.

    Returns a :class:`CuttingPlaneResult`; ``base_*`` hold the solve on the
    original constraint grid.
    """
    cfg = ctx.config
    scfg = cfg.solver_config()
    flags: list = []
    history = [] if history is None else history
    lp = ctx.bayes_lp(power, cgrid)
    sol, lp = _solve_capped(ctx, lp, scfg, x0, flags, cfg.subgradient_warm_start)
    base_sol, base_lp = sol, lp
    target = _fwer_target(cfg)
    rep = None
    for rnd in range(cfg.cutting_rounds + 1):
        proc = DiscreteProcedure(ctx.grid, TESTING, sol.x)
        ext = analysis.extend_procedure(proc)
        peaks = analysis.scan_fwer(ext, ctx.scale, cfg.b_prime, cfg.scan_step, target)
        if not peaks or not cfg.verify:
            rep = analysis.verify_fwer(ext, ctx.scale, cfg.fine_tau, cfg.b_prime, cfg.alpha)
            if rep.passed or not cfg.verify:
                break
            if rep.max_grid_fwer + rep.lipschitz_margin <= cfg.alpha:
                # only the tail argument failed; more rows cannot fix that
                flags.append("tail_not_certified")
                break
            d1, d2 = rep.argmax
            peaks = [(rep.max_grid_fwer, d1, d2)]
        if rnd == cfg.cutting_rounds:
            rep = analysis.verify_fwer(ext, ctx.scale, cfg.fine_tau, cfg.b_prime, cfg.alpha)
            flags.append("cutting_rounds_exhausted")
            break
        rows = list(lp.rows)
        added = 0
        for f_ext, d1, d2 in peaks[:40]:
            excess = max(0.0, f_ext - proc.fwer_at(ctx.scale, d1, d2))
            rhs = min(cfg.alpha - cfg.alpha_margin, target - excess - 1e-6)
            hit = [i for i, r in enumerate(rows) if r.tag == "FWER" and abs(r.point[0] - d1) < 1e-9
                   and abs(r.point[1] - d2) < 1e-9]
            if hit:
                i = hit[0]
                rows[i] = dataclasses.replace(rows[i], rhs=min(rows[i].rhs, rhs))
            else:
                rows.append(dataclasses.replace(build_fwer_row((d1, d2), ctx.grid, ctx.scale, cfg.alpha_margin),
                                                rhs=rhs))
                added += 1
        history.append({"round": rnd, "n_peaks": len(peaks), "max_peak": peaks[0][0], "added": added,
                        "n_rows": len(rows)})
        lp = dataclasses.replace(lp, rows=rows, meta=dict(lp.meta))
        sol, lp = _solve_capped(ctx, lp, scfg, sol.x, flags, False)
    return CuttingPlaneResult(proc, sol, lp, base_sol, base_lp, rep, flags)


def best_dual_bound(ctx: Context, res: CuttingPlaneResult, relaxations=()):
    """Largest of the Lagrangian bounds from several multiplier vectors.

    Any nonnegative multipliers give a valid bound, so besides the duals of
    the solved LPs this also tries the duals of the base LP solved at
    slightly lower power targets, which are far better conditioned when the
    target sits at the edge of feasibility.  ``lower_bound`` holds for every
    level-alpha procedure; ``matched_bound`` holds for the levels the base LP
    enforces and is taken only over multipliers on the base LP's rows.
    """
    cfg = ctx.config
    power = _power_of(res.base_lp)
    sources = [("base", res.base_solution, res.base_lp)]
    for delta in relaxations:
        if delta <= 0 or power - delta <= 0:
            continue
        lp_r = res.base_lp.with_rhs("POWER", -(power - delta))
        try:
            sol_r = solve(lp_r, cfg.solver_config(), res.base_solution.x, warm_subgradient=False)
        except InfeasibleError:
            continue
        sources.append((f"relaxed-{delta:g}", sol_r, lp_r))
    certs = [(name, analysis.dual_lower_bound(s, l, ctx.loss, ctx.prior, ctx.scale, alpha=cfg.alpha, power=power))
             for name, s, l in sources]
    matched = max(c.matched_bound for _, c in certs)
    if res.lp is not res.base_lp:
        certs.append(("final", analysis.dual_lower_bound(res.solution, res.lp, ctx.loss, ctx.prior, ctx.scale,
                                                         alpha=cfg.alpha, power=power)))
    name, best = max(certs, key=lambda nc: nc[1].lower_bound)
    return dataclasses.replace(best, multipliers=name, matched_bound=matched)


def run_bayes(cfg: RunConfig, power: float | None = None, x0=None) -> RunReport:
    """Build, solve, extend, verify and bound a constrained Bayes problem."""
    t0 = time.perf_counter()
    ctx = Context.from_config(cfg)
    report = _new_report(cfg, "bayes")
    target = cfg.power if power is None else power
    history: list = []
    try:
        res = cutting_plane_solve(ctx, target, x0=x0, history=history)
        proc, sol, lp, fwer_rep, flags = res.procedure, res.solution, res.lp, res.fwer, res.flags
    except InfeasibleError as err:
        report.status = "infeasible"
        report.certification["infeasibility"] = {k: v for k, v in (err.certificate or {}).items() if k != "y"}
        return _finalize(report, cfg, t0)
    report.flags.extend(flags)
    proc.label = f"bayes {cfg.prior} 1-beta={lp.meta['power']:.6g}"
    _fill_solution(report, ctx, proc, sol, lp)
    report.certification["cutting_planes"] = history
    if fwer_rep is not None:
        report.certification["fwer"] = fwer_rep.to_dict()
        if cfg.verify and not fwer_rep.passed:
            report.status = "verification_failed"
    base_risk = res.base_lp.bayes_risk(res.base_solution.x)
    report.summary["discretized_optimum_risk"] = base_risk
    if cfg.bound:
        cert = best_dual_bound(ctx, res, cfg.bound_relaxations)
        cert = dataclasses.replace(cert, primal_risk=base_risk, bound_gap=abs(base_risk - cert.lower_bound))
        report.certification["dual_bound"] = cert.to_dict()
        report.certification["dual_bound"]["verified_procedure_gap"] = report.summary["bayes_risk"] - cert.lower_bound
    return _finalize(report, cfg, t0)


def _fill_solution(report: RunReport, ctx: Context, proc, sol, lp):
    risk = lp.bayes_risk(sol.x)
    report.summary.update({
        "n": ctx.design.n, "n_over_n_min": ctx.design.n / ctx.config.n_min(),
        "power_target": lp.meta.get("power"),
        "objective": sol.objective, "bayes_risk": risk, "one_minus_bayes_risk": 1.0 - risk,
        # risk of never rejecting minus the risk: for the indicator loss this is
        # the prior-weighted power over the alternatives (equals 1 - risk when
        # the do-nothing risk is 1, as under the symmetric prior)
        "weighted_power": lp.const - risk,
        "n_v": lp.n_v, "n_d": lp.n_d, "n_s": lp.n_s,
        "fractional_share": sol.fractional_share(), "coherent": proc.is_coherent(),
        **power_table(proc, ctx.scale),
    })
    report.certification.update({
        "solver_status": sol.status, "dual_bound_lp": sol.dual_bound, "duality_gap": sol.gap,
        "max_violation": sol.max_violation, "complementary_slackness": sol.complementary_slackness(lp),
        "active_constraints": _active_rows(lp, sol), "solver_rounds": sol.iterations,
        "wall_time": sol.wall_time,
    })
    report.procedure, report.solution, report.lp = proc, sol, lp


# ---------------------------------------------------------------------------
# minimax


def default_alternatives(scale) -> list:
    d1, d2 = scale.delta_min
    return [(d1, 0.0), (0.0, d2), (d1, d2)]


def run_minimax(cfg: RunConfig, alternatives=None, width: float = 1e-3, max_solves: int = 12) -> RunReport:
    """Bisection on the worst-case risk over a finite set of alternatives."""
    t0 = time.perf_counter()
    ctx = Context.from_config(cfg)
    report = _new_report(cfg, "minimax")
    scfg = cfg.solver_config()
    P = [tuple(map(float, a)) for a in (alternatives or default_alternatives(ctx.scale))]
    base = ctx.bayes_lp(cfg.power)
    p_max = None
    if cfg.power > 0.5:
        p_max = max_power(base, scfg)
        if p_max < cfg.power:
            if cfg.power - p_max > cfg.power_slack:
                report.status = "infeasible"
                report.certification["infeasibility"] = {"max_power": p_max, "target_power": cfg.power}
                return _finalize(report, cfg, t0)
            base = base.with_rhs("POWER", -(p_max - POWER_CAP_MARGIN))
            base.meta["power"] = p_max - POWER_CAP_MARGIN
            report.flags.append("power_target_capped")
    zero = SparseLP(base.grid, base.space, np.zeros_like(base.c), base.rows, 0.0, meta=dict(base.meta))

    def lp_at(v):
        return zero.with_rows([build_risk_row(ctx.grid, ctx.loss, d, v) for d in P], cap=v)

    hi = ctx.loss.max_value(((-np.inf, cfg.delta_min * 10), (-np.inf, cfg.delta_min * 10)))
    hi = float(max(ctx.loss(a, *d) for d in P for a in TESTING.actions)) if not math.isfinite(hi) else hi
    lo = 0.0
    steps = []
    feas = check_feasible(lp_at(hi), scfg)
    steps.append({"v": hi, "feasible": bool(feas)})
    if not feas:
        report.status = "infeasible"
        report.certification["infeasibility"] = {"v": hi, "margin": feas.certificate["margin"]}
        return _finalize(report, cfg, t0)
    best = feas.x
    while hi - lo >= width and len(steps) < max_solves:
        mid = 0.5 * (lo + hi)
        f = check_feasible(lp_at(mid), scfg, x_warm=best)
        steps.append({"v": mid, "feasible": bool(f)})
        if f:
            hi, best = mid, f.x
        else:
            lo = mid
    lp = lp_at(hi)
    proc = DiscreteProcedure(ctx.grid, TESTING, best, f"minimax v={hi:.4f}")
    risks = {str(d): float(r) for d, r in zip(P, _point_risks(ctx, proc, P))}
    worst = max(zip(P, _point_risks(ctx, proc, P)), key=lambda t: t[1])
    report.summary.update({"minimax_value": hi, "lower_bracket": lo, "bracket_width": hi - lo,
                           "n_feasibility_solves": len(steps), "risk_at": risks,
                           "argmax_alternative": list(worst[0]), "max_risk": worst[1],
                           "max_violation": lp.max_violation(best), **power_table(proc, ctx.scale)})
    report.tables["bisection"] = steps
    ext = analysis.extend_procedure(proc)
    report.certification["fwer_grid_max"] = max(
        [p[0] for p in analysis.scan_fwer(ext, ctx.scale, cfg.b_prime, 0.01, 0.0)] or [0.0])
    report.procedure, report.lp = proc, lp
    return _finalize(report, cfg, t0)


def _point_risks(ctx: Context, proc: DiscreteProcedure, P) -> list:
    out = []
    for d in P:
        probs = proc.action_probs(*d)
        out.append(float(sum(p * ctx.loss(a, *d) for p, a in zip(probs, proc.space.actions))))
    return out


# ---------------------------------------------------------------------------
# decision theory


def recommendation_table(proc: DiscreteProcedure, alternatives) -> list:
    rows = []
    for d in alternatives:
        p = proc.action_probs(*d)
        rows.append({"alternative": list(d), **{lab: float(v) for lab, v in zip(DECISION.labels(), p)}})
    return rows


def run_decision(cfg: RunConfig, strict: bool = False) -> RunReport:
    """Optimal treatment-recommendation rule under aggregate-harm constraints."""
    t0 = time.perf_counter()
    cfg = cfg if cfg.workflow == "decision" else cfg.replace(workflow="decision", loss="decision")
    ctx = Context.from_config(cfg)
    if not isinstance(ctx.loss, DecisionLoss):
        raise TypeError("decision workflow needs a decision loss")
    report = _new_report(cfg, "decision")
    lp = build_decision_lp(ctx.scale, ctx.grid, ctx.cgrid, ctx.loss, ctx.prior, cfg.alpha_margin, strict,
                           objective=ctx.objective(DECISION))
    sol = solve(lp, cfg.solver_config(), warm_subgradient=cfg.subgradient_warm_start)
    proc = DiscreteProcedure(ctx.grid, DECISION, sol.x, "decision")
    risk = lp.bayes_risk(sol.x)
    P = default_alternatives(ctx.scale)
    table = recommendation_table(proc, P)
    d1, d2 = ctx.scale.delta_min
    acc1 = proc.action_probs(d1, 0.0)[DECISION.index(frozenset({1}))]
    acc2 = proc.action_probs(0.0, d2)[DECISION.index(frozenset({2}))]
    report.summary.update({"bayes_risk": risk, "objective": sol.objective,
                           "p_both_at_both": table[2]["1+2"],
                           "accuracy_single_1": float(acc1), "accuracy_single_2": float(acc2),
                           "accuracy_single": 0.5 * float(acc1 + acc2),
                           "global_null_error": float(1.0 - proc.action_probs(0.0, 0.0)[0]),
                           "strict": strict, "fractional_share": sol.fractional_share()})
    report.tables["recommendations"] = table
    report.certification.update({"duality_gap": sol.gap, "max_violation": sol.max_violation,
                                 "active_constraints": _active_rows(lp, sol)})
    report.procedure, report.solution, report.lp = proc, sol, lp
    return _finalize(report, cfg, t0)


# ---------------------------------------------------------------------------
# sweeps


def default_beta_grid(lo: float = 0.8, hi: float = 0.9, step: float = 0.005) -> np.ndarray:
    n = int(round((hi - lo) / step))
    return np.round(np.linspace(hi, lo, n + 1), 10)


CURVE_COLUMNS = ("power", "one_minus_bayes_risk", "weighted_power", "power_H01_at_d1min_0", "power_H02_at_0_d2min",
                 "power_avg_both", "power_H0C_at_both", "status")


def _curve_row(p, rep: RunReport) -> dict:
    row = {"power": float(p), "status": rep.status}
    for k in CURVE_COLUMNS[1:-1]:
        row[k] = rep.summary.get(k, float("nan"))
    return row


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _bayes_point(args):
    cfg, p = args
    return run_bayes(cfg.replace(power=float(p), output_dir=None))


def baseline_points(scale, loss, prior, alpha: float = 0.05) -> list:
    """(label, 1 - risk, power table) for the classical procedures."""
    out = []
    for proc in (rosenbaum(scale, alpha), bergmann_hommel_procedure(scale, alpha), song_chi(scale, alpha=alpha)):
        out.append({"label": proc.label, "one_minus_bayes_risk": 1.0 - evaluate_bayes_risk(proc, loss, prior),
                    **power_table(proc, scale)})
    return out


def run_tradeoff(cfg: RunConfig, beta_grid=None, workers: int | None = None) -> RunReport:
    """Optimal tradeoff curve between Bayes risk and the H0C power target."""
    t0 = time.perf_counter()
    grid = default_beta_grid() if beta_grid is None else np.asarray(beta_grid, dtype=float)
    if np.any((grid <= 0) | (grid >= 1)):
        raise ValueError("power targets must lie in (0, 1)")
    report = _new_report(cfg, "tradeoff")
    workers = _workers() if workers is None else workers
    rows = []
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            reps = list(pool.map(_bayes_point, [(cfg, p) for p in grid]))
    else:
        reps, x_prev = [], None
        for p in grid:
            try:
                rep = run_bayes(cfg.replace(output_dir=None), power=float(p), x0=x_prev)
            except Exception as exc:  # a failed point must not stop the sweep
                log.error("tradeoff point %.4f failed: %s", p, exc)
                rep = RunReport("bayes", cfg.to_dict(), status=f"error: {exc}")
            if rep.solution is not None:
                x_prev = rep.solution.x
            reps.append(rep)
    for p, rep in zip(grid, reps):
        rows.append(_curve_row(p, rep))
    rows.sort(key=lambda r: r["power"])
    ctx = Context.from_config(cfg)
    report.tables["curve"] = rows
    report.tables["baselines"] = baseline_points(ctx.scale, ctx.loss, ctx.prior, cfg.alpha)
    if cfg.output_dir:
        Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
        export_curves(rows, Path(cfg.output_dir) / "tradeoff_curve.csv")
    return _finalize(report, cfg, t0)


def run_sample_size_sweep(cfg: RunConfig, n_factors=None, target: float | None = None,
                          hi: float = 1.5, tol: float = 0.005) -> RunReport:
    """Forward mode: subpopulation powers of the optimum at each n / n_min.
    Inverse mode (``target`` given): smallest n / n_min at which the
    subpopulation-only optimum reaches power ``target`` for both H01 and H02.

    Both modes hold the H0C power target at ``cfg.n_min_power``, the power
    that defines n_min."""
    t0 = time.perf_counter()
    report = _new_report(cfg, "samplesize")
    if target is None:
        factors = [1.0, 1.03, 1.06] if n_factors is None else list(n_factors)
        if min(factors) < 1.0:
            raise ValueError("sample sizes below n_min cannot meet the H0C power target")
        rows = []
        for f in factors:
            rep = run_bayes(cfg.replace(n_factor=float(f), n=None, output_dir=None, power=cfg.n_min_power,
                                        bound=False))
            rows.append({"n_over_n_min": float(f), "status": rep.status, "flags": rep.flags,
                         **{k: rep.summary.get(k) for k in ("power_H01_at_d1min_0", "power_H02_at_0_d2min",
                                                             "power_H0C_at_both", "one_minus_bayes_risk")}})
        report.tables["forward"] = rows
        return _finalize(report, cfg, t0)
    if not 0 < target < 1:
        raise ValueError("target power must lie in (0, 1)")
    sub = cfg.replace(prior="subpop-only", prior_components=None, power=cfg.n_min_power, bound=False,
                      output_dir=None)

    def reaches(f):
        rep = run_bayes(sub.replace(n_factor=float(f), n=None))
        pw = min(rep.summary.get("power_H01_at_d1min_0", 0.0), rep.summary.get("power_H02_at_0_d2min", 0.0))
        steps.append({"n_over_n_min": float(f), "min_power": pw, "status": rep.status})
        return pw >= target

    steps: list = []
    lo_f = 1.0
    if reaches(lo_f):
        found = lo_f
    else:
        if not reaches(hi):
            report.status = "target_not_reached"
            report.tables["inverse"] = steps
            return _finalize(report, cfg, t0)
        a, b = lo_f, hi
        while b - a > tol:
            mid = 0.5 * (a + b)
            if reaches(mid):
                b = mid
            else:
                a = mid
        found = b
    report.summary.update({"target": target, "n_over_n_min": found})
    report.tables["inverse"] = steps
    return _finalize(report, cfg, t0)


def run_global_null_ablation(cfg: RunConfig) -> RunReport:
    """Solve with FWER controlled only at the global null (plus the power row)."""
    t0 = time.perf_counter()
    ctx = Context.from_config(cfg)
    report = _new_report(cfg, "ablate-global-null")
    cg = ConstraintGrid.global_null(ctx.scale)
    lp = ctx.bayes_lp(cfg.power, cg)
    flags: list = []
    try:
        sol, lp = _solve_capped(ctx, lp, cfg.solver_config(), None, flags, cfg.subgradient_warm_start)
    except InfeasibleError as err:
        report.status = "infeasible"
        report.certification["infeasibility"] = {k: v for k, v in (err.certificate or {}).items() if k != "y"}
        return _finalize(report, cfg, t0)
    proc = DiscreteProcedure(ctx.grid, TESTING, sol.x, "global-null only")
    report.flags.extend(flags)
    _fill_solution(report, ctx, proc, sol, lp)
    d1, d2 = ctx.scale.delta_min
    full = proc.full()
    none_or_all = full[:, :, [0, TESTING.index(frozenset({H01, H02, H0C}))]].sum(axis=2)
    report.summary.update({
        "fwer_at_d1min_0": proc.fwer_at(ctx.scale, d1, 0.0),
        "fwer_at_0_d2min": proc.fwer_at(ctx.scale, 0.0, d2),
        "fwer_at_global_null": proc.fwer_at(ctx.scale, 0.0, 0.0),
        "all_or_nothing_share": float(np.mean(none_or_all > 1 - 1e-6)),
    })
    return _finalize(report, cfg, t0)


# ---------------------------------------------------------------------------
# verify / bound entry points


def verify_procedure(proc: DiscreteProcedure, cfg: RunConfig) -> dict:
    ctx = Context.from_config(cfg)
    ext = analysis.extend_procedure(proc)
    return analysis.verify_fwer(ext, ctx.scale, cfg.fine_tau, cfg.b_prime, cfg.alpha).to_dict()


# ---------------------------------------------------------------------------
# exports


def export_regions(procedure: DiscreteProcedure, path) -> None:
    Path(path).write_text(procedure.region_csv())


def export_curves(table, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for row in table:
        w.writerow([f"{row[c]:.10g}" if isinstance(row[c], float) else row[c] for c in CURVE_COLUMNS])
    Path(path).write_text(buf.getvalue())


WORKFLOWS = {
    "bayes": run_bayes,
    "minimax": run_minimax,
    "decision": run_decision,
    "tradeoff": run_tradeoff,
    "samplesize": run_sample_size_sweep,
    "ablate-global-null": run_global_null_ablation,
    "verify": None,
    "bound": run_bayes,
}


def run(cfg: RunConfig) -> RunReport:
    fn = WORKFLOWS[cfg.workflow]
    if fn is None:
        raise ValueError("the verify workflow needs a procedure file; use verify_procedure")
    return fn(cfg)


def solver_summary(cfg: RunConfig) -> dict:
    return config_dict(cfg.solver_config())
