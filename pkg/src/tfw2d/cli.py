"""Command-line entry point: ``tfw2d {solve3d,solve1d,homogenize,validate}``.

Exit codes: 0 success, 1 configuration error, 2 SCF divergence or partial
study, 3 eigensolver stall, 4 failed validation checks.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config, parse_overrides
from .errors import EigensolverStalled, ScfDiverged

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_STALLED = 3
EXIT_VALIDATION = 4

log = logging.getLogger("tfw2d")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI configuration file")
    common.add_argument("--out", help="output directory (output.dir)")
    common.add_argument("--format", choices=("csv", "json"), help="result file format")
    common.add_argument("--threads", help="worker threads for the study, or 'auto'")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", help="override a configuration entry")

    parser = argparse.ArgumentParser(prog="tfw2d", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve3d", parents=[common], help="ground state on the 3D periodized cell")
    sub.add_parser("solve1d", parents=[common], help="ground state of the 1D limit model")
    sub.add_parser("homogenize", parents=[common], help="run the m_N convergence study")
    p = sub.add_parser("validate", parents=[common], help="run the self-check suite")
    p.add_argument("--only", help="run a single suite (spectral, poisson, green, eigen, scf, lemma)")
    for name in ("solve3d", "solve1d"):
        sub.choices[name].add_argument("--dump-density", action="store_true",
                                       help="also save the full density as density.npy")
    return parser


def _resolve_config(args) -> RunConfig:
    overrides = parse_overrides(args.overrides)
    out = overrides.setdefault("output", {})
    if args.out is not None:
        out["dir"] = args.out
    if args.format is not None:
        out["format"] = args.format
    if args.threads is not None:
        out["threads"] = args.threads
    if getattr(args, "dump_density", False):
        out["dump_density"] = "true"
    env_level = os.environ.get("TFW_LOG")
    if env_level:
        out["log_level"] = env_level
    try:
        return load_config(args.config, overrides)
    except ConfigError as exc:
        if exc.key == "output.log_level" and env_level:
            raise ConfigError("TFW_LOG", str(exc).split(": ", 1)[1]) from None
        raise


def _setup_logging(cfg: RunConfig) -> None:
    logging.basicConfig(level=cfg.output.log_level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)


def cmd_solve3d(cfg: RunConfig) -> int:
    from .output import write_metadata, write_scf_result
    from .solver import el_residual, scf_solve

    grid = cfg.grid3()
    res = scf_solve(cfg.nuclear_model(), grid, cfg.scf_config())
    r = el_residual(res)
    out = Path(cfg.output.dir)
    write_scf_result(out, res, r, cfg.output.format, cfg.output.dump_density)
    write_metadata(out, "solve3d", cfg.model_dump(), "converged")
    print(f"energy {res.energy.total:.12g}  lambda {res.lam:.12g}  "
          f"iterations {res.iterations}  el_residual {r:.3e}")
    return EXIT_OK


def cmd_solve1d(cfg: RunConfig) -> int:
    from .output import write_metadata, write_scf_result
    from .solver import el_residual, scf_solve_1d

    grid = cfg.line_grid()
    res = scf_solve_1d(cfg.nuclear_profile_1d(), grid, cfg.scf_config())
    r = el_residual(res)
    out = Path(cfg.output.dir)
    write_scf_result(out, res, r, cfg.output.format, cfg.output.dump_density)
    write_metadata(out, "solve1d", cfg.model_dump(), "converged")
    print(f"energy {res.energy.total:.12g}  lambda {res.lam:.12g}  "
          f"iterations {res.iterations}  el_residual {r:.3e}")
    return EXIT_OK


def cmd_homogenize(cfg: RunConfig) -> int:
    from .homogenization import run_study
    from .output import write_homogenization, write_metadata

    plan = cfg.homogenization_plan()
    report = run_study(plan, threads=cfg.thread_count())
    out = Path(cfg.output.dir)
    write_homogenization(out, report, cfg.output.format)
    status = "complete" if report.complete else f"partial: {report.failure}"
    write_metadata(out, "homogenize", cfg.model_dump(), status)
    print(f"I_0 = {report.i0:.12g}")
    for pt in report.per_n:
        print(f"N = {pt.n}: I_N = {pt.energy:.12g}  |I_N - I_0| = {abs(pt.energy - report.i0):.3e}  "
              f"err_L1 = {pt.errors.get('L1', float('nan')):.3e}")
    for name, fit in report.fitted_rates.items():
        print(f"rate {name}: slope {fit.slope:.4f} (r^2 = {fit.r_squared:.4f})")
    if not report.complete:
        print(f"study incomplete: {report.failure}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_validate(cfg: RunConfig, only=None) -> int:
    from .validation import format_table, run_checks

    outcomes = run_checks(only)
    print(format_table(outcomes))
    failed = [o.name for o in outcomes if not o.passed]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"all {len(outcomes)} checks passed")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve_config(args)
        if args.command == "validate":
            from .validation import SUITES
            if args.only is not None and args.only not in SUITES:
                raise ConfigError("--only", f"unknown suite {args.only!r}; choose from {', '.join(SUITES)}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _setup_logging(cfg)
    try:
        if args.command == "solve3d":
            return cmd_solve3d(cfg)
        if args.command == "solve1d":
            return cmd_solve1d(cfg)
        if args.command == "homogenize":
            return cmd_homogenize(cfg)
        return cmd_validate(cfg, args.only)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScfDiverged as exc:
        print(f"SCF diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except EigensolverStalled as exc:
        print(f"eigensolver stalled: {exc}", file=sys.stderr)
        return EXIT_STALLED


if __name__ == "__main__":
    sys.exit(main())
