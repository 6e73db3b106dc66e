"""Command-line entry point: ``subpop-lp <subcommand> [options]``.

Every subcommand resolves a :class:`RunConfig` from an optional preset, an
optional JSON config file and per-field flags (in that order of precedence),
runs the workflow and prints the JSON report.  The exit code is 0 on
success, 1 when FWER verification fails and 2 for infeasible or failed runs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .procedures import DiscreteProcedure
from .workflows import (PRESET_NAMES, RunConfig, export_curves, export_regions, load_preset, run_bayes,
                        run_decision, run_global_null_ablation, run_minimax, run_sample_size_sweep, run_tradeoff,
                        verify_procedure)

EXIT_OK, EXIT_VERIFY, EXIT_FAILED = 0, 1, 2

# RunConfig fields exposed as flags; dict / tuple fields take JSON
_SKIP = {"workflow"}


def _field_flags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("config fields (override preset / --config)")
    for f in dataclasses.fields(RunConfig):
        if f.name in _SKIP:
            continue
        flag = "--" + f.name.replace("_", "-")
        if f.type in ("bool", bool):
            g.add_argument(flag, dest=f.name, type=_parse_bool, default=None, metavar="{true,false}")
        elif f.name in ("sigma2", "loss_params", "prior_components", "solver", "bound_relaxations"):
            g.add_argument(flag, dest=f.name, type=json.loads, default=None, metavar="JSON")
        elif f.name in ("loss", "prior", "output_dir"):
            g.add_argument(flag, dest=f.name, default=None)
        elif f.name in ("g_target", "cutting_rounds", "seed"):
            g.add_argument(flag, dest=f.name, type=int, default=None)
        else:
            g.add_argument(flag, dest=f.name, type=float, default=None)


def _parse_bool(text: str) -> bool:
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _resolve_config(args, workflow: str) -> RunConfig:
    d: dict = {}
    if args.preset:
        d.update(load_preset(args.preset).to_dict())
    if args.config:
        d.update(json.loads(Path(args.config).read_text()))
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, f.name, None)
        if f.name not in _SKIP and v is not None:
            d[f.name] = v
    d["workflow"] = workflow
    if workflow == "decision":
        d["loss"] = "decision"
    return RunConfig.from_dict(d)


def _emit(report, args) -> int:
    text = report.to_json()
    if args.report:
        Path(args.report).write_text(text + "\n")
    if not args.quiet:
        print(text)
    if report.status == "verification_failed":
        return EXIT_VERIFY
    return EXIT_OK if report.ok else EXIT_FAILED


def _cmd_bayes(args):
    return _emit(run_bayes(_resolve_config(args, "bayes")), args)


def _cmd_bound(args):
    cfg = _resolve_config(args, "bound").replace(bound=True)
    return _emit(run_bayes(cfg), args)


def _cmd_minimax(args):
    alts = json.loads(args.alternatives) if args.alternatives else None
    return _emit(run_minimax(_resolve_config(args, "minimax"), alternatives=alts), args)


def _cmd_decision(args):
    return _emit(run_decision(_resolve_config(args, "decision"), strict=args.strict), args)


def _cmd_tradeoff(args):
    grid = json.loads(args.beta_grid) if args.beta_grid else None
    return _emit(run_tradeoff(_resolve_config(args, "tradeoff"), beta_grid=grid, workers=args.workers), args)


def _cmd_samplesize(args):
    factors = json.loads(args.n_factors) if args.n_factors else None
    rep = run_sample_size_sweep(_resolve_config(args, "samplesize"), n_factors=factors, target=args.target)
    return _emit(rep, args)


def _cmd_ablate(args):
    return _emit(run_global_null_ablation(_resolve_config(args, "ablate-global-null")), args)


def _cmd_verify(args):
    cfg = _resolve_config(args, "bayes")
    proc = DiscreteProcedure.from_json(args.procedure)
    rep = verify_procedure(proc, cfg)
    if not args.quiet:
        print(json.dumps(rep, indent=2, sort_keys=True, default=float))
    return EXIT_OK if rep["passed"] else EXIT_VERIFY


def _cmd_export(args):
    src = Path(args.source)
    if args.kind == "regions":
        export_regions(DiscreteProcedure.from_json(src), args.out)
    else:
        report = json.loads(src.read_text())
        export_curves(report["tables"]["curve"], args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="subpop-lp", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_, config=True):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        if config:
            sp.add_argument("--preset", choices=PRESET_NAMES, default=None)
            sp.add_argument("--config", help="JSON RunConfig file", default=None)
            sp.add_argument("--report", help="also write the JSON report here", default=None)
            sp.add_argument("-q", "--quiet", action="store_true", help="do not print the report")
            _field_flags(sp)
        return sp

    add("bayes", _cmd_bayes, "constrained Bayes solve with certification")
    add("bound", _cmd_bound, "Bayes solve reporting the dual lower bound")
    sp = add("minimax", _cmd_minimax, "minimax solve by bisection over risk caps")
    sp.add_argument("--alternatives", help="JSON list of [d1, d2] points", default=None)
    sp = add("decision", _cmd_decision, "treatment-recommendation rule")
    sp.add_argument("--strict", action="store_true", help="impose every aggregate-harm row, not only the global null")
    sp = add("tradeoff", _cmd_tradeoff, "Bayes risk vs H0C power curve")
    sp.add_argument("--beta-grid", help="JSON list of power targets", default=None)
    sp.add_argument("--workers", type=int, default=None)
    sp = add("samplesize", _cmd_samplesize, "sample-size sweep (forward) or minimum n for a target power")
    sp.add_argument("--n-factors", help="JSON list of n / n_min values", default=None)
    sp.add_argument("--target", type=float, default=None, help="inverse mode: target subpopulation power")
    add("ablate-global-null", _cmd_ablate, "solve with FWER controlled only at the global null")
    sp = add("verify", _cmd_verify, "certify the FWER of a saved procedure")
    sp.add_argument("procedure", help="procedure JSON written by a previous run")
    sp = add("export", _cmd_export, "write region or curve CSV files", config=False)
    sp.add_argument("kind", choices=("regions", "curves"))
    sp.add_argument("source", help="procedure JSON (regions) or tradeoff report JSON (curves)")
    sp.add_argument("out")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
