"""Command-line entry point ``pdeid``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import io
from .experiment import ConfigError, ExperimentConfig, burgers_config, kdv_config, run_experiment, run_sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAILURE = 3


def _config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    elif getattr(args, "preset", None) == "kdv":
        cfg = kdv_config()
    else:
        cfg = burgers_config()
    over = {}
    if getattr(args, "trials", None) is not None:
        over["trials"] = args.trials
    if getattr(args, "out", None) is not None:
        over["out_dir"] = str(args.out)
    if getattr(args, "N", None) is not None:
        over["N_grid"] = tuple(args.N)
    if getattr(args, "sigma", None) is not None:
        over["sigma"] = args.sigma
    if getattr(args, "seed", None) is not None:
        over["base_seed"] = args.seed
    try:
        return replace(cfg, **over) if over else cfg
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def cmd_run(args) -> int:
    cfg = _config(args)
    if args.sweep:
        runs = run_sweep(cfg, args.sweep, threads=args.threads)
        trials = [t for r in runs.values() for t in r.trials]
        for name, r in runs.items():
            _summary(r.aggregate, name)
    else:
        r = run_experiment(cfg, threads=args.threads)
        trials = r.trials
        _summary(r.aggregate, "")
    failed = [t for t in trials if t.verdict == "Failure"]
    if args.strict and failed:
        print(f"{len(failed)} trial(s) failed", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def _summary(rows, name):
    for row in rows:
        print(f"{name + ' ' if name else ''}N={row['N']:<5d} M={row['M']:<6d} "
              f"P(exact)={row['recovery_prob']:.2f}  median dual={row['dual_median']:.3g}  "
              f"median incoherence={row['incoherence_median']:.3g}")


def cmd_solve_only(args) -> int:
    from .experiment import clean_field
    from .solvers import add_noise

    cfg = _config(args)
    N = args.N[0] if args.N else cfg.N_grid[0]
    clean = clean_field(cfg, N)
    field = clean if not args.noisy else add_noise(clean, cfg.sigma, args.noise_seed).noisy
    io.save_field(args.output, field)
    print(f"wrote {clean.grid.M}x{clean.grid.N} field to {args.output}")
    return EXIT_OK


def _load_data(args):
    from .types import TrajectoryDataset

    return TrajectoryDataset(noisy=io.load_field(args.field))


def cmd_smooth_only(args) -> int:
    from .locpoly import smooth_all

    cfg = _config(args)
    data = _load_data(args)
    sf = smooth_all(data, cfg.P_max, cfg.plan)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    suffix = ".csv" if args.csv else ".bin"
    io.save_field(out / f"u_t{suffix}", sf.u_t_hat)
    for p, f in enumerate(sf.dx_hat):
        io.save_field(out / f"dx{p}{suffix}", f)
    print(f"wrote {cfg.P_max + 2} smoothed fields to {out}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    from .diagnostics import diagnose
    from .dictionary import build_features, build_target, normalize_columns
    from .lasso import LassoProblem, lambda_path, refine_for_count, select_lambda_by_count
    from .locpoly import smooth_all

    cfg = _config(args)
    data = _load_data(args)
    sf = smooth_all(data, cfg.P_max, cfg.plan)
    problem = LassoProblem(normalize_columns(build_features(sf)), build_target(sf))
    S = cfg.target_support
    path = refine_for_count(problem, lambda_path(problem, cfg.n_lambdas, cfg.ratio), len(S))
    fit = select_lambda_by_count(path, len(S))
    rep = diagnose(problem, S, fit, cfg.truth)
    g = data.grid
    row = io.report_row(g.N, g.M, data.seed, fit.lam if fit else None, rep)
    print(",".join(io.REPORT_COLUMNS))
    print(",".join(row))
    if fit is not None and args.fit_csv:
        io.write_fit_csv(args.fit_csv, fit)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pdeid", description="Sparse PDE identification experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="JSON experiment configuration")
        sp.add_argument("--preset", choices=["burgers", "kdv"], default="burgers",
                        help="built-in configuration when --config is absent")
        sp.add_argument("--N", type=int, nargs="+", help="override the N grid")
        sp.add_argument("--sigma", type=float)
        sp.add_argument("--seed", type=int, help="override base_seed")

    r = sub.add_parser("run", help="run Monte-Carlo trials and write tables and figures")
    common(r)
    r.add_argument("--trials", type=int)
    r.add_argument("--out", type=Path)
    r.add_argument("--threads", type=int, default=None)
    r.add_argument("--strict", action="store_true", help="exit 3 if any trial fails")
    r.add_argument("--sweep", type=float, nargs="+", metavar="NU", help="viscosities for a sweep")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("solve-only", help="write a clean (or noisy) trajectory")
    common(s)
    s.add_argument("--noisy", action="store_true")
    s.add_argument("--noise-seed", type=int, default=0)
    s.add_argument("-o", "--output", type=Path, required=True, help=".csv or binary field file")
    s.set_defaults(func=cmd_solve_only)

    m = sub.add_parser("smooth-only", help="local-polynomial derivative fields of a stored field")
    common(m)
    m.add_argument("field", type=Path)
    m.add_argument("-o", "--out-dir", type=Path, required=True)
    m.add_argument("--csv", action="store_true")
    m.set_defaults(func=cmd_smooth_only)

    d = sub.add_parser("diagnose", help="oracle-lambda fit and diagnostics for a stored field")
    common(d)
    d.add_argument("field", type=Path)
    d.add_argument("--fit-csv", type=Path)
    d.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
