"""Command-line interface.

Subcommands: simulate (one configuration to a curve file), fit (curve file
to a fit report), sweep (grid of configurations), oracle (exact small-N
curve), analytic (tabulate a closed-form model), report (scaling tables
from a summary.tsv).  Exit codes: 0 success, 1 validation error, 2 partial
failure (some sweep configurations failed), 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .dynamics import ONSAGER_KT_C, TrajectoryConfig
from .fidelity import (
    DEFAULT_STEP_CAP,
    FidelityCurve,
    auto_sample_times,
    curve_metadata,
    estimate_fidelity,
    geometric_times,
    read_curve,
    write_curve,
)
from .fitting import NoDecayError, fit_exponential_model, fit_gaussian_model
from .lattice import Couplings, Geometry, TieRule
from .models import ModelParams, binomial_fidelity, effective_spin_fidelity, exponential_fidelity
from .oracle import exact_fidelity
from .sweep import (
    SweepSpec,
    parse_spec,
    read_summary,
    run_sweep,
    scaling_report,
    write_fit_report,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_PARTIAL = 2
EXIT_IO = 3


def _add_lattice_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dimension", type=int, choices=(1, 2), required=True)
    p.add_argument("--side-length", type=int, required=True,
                   help="lattice side L (N = L in 1D, L^2 in 2D)")
    p.add_argument("--kT", type=float, required=True,
                   help=f"temperature in units of J (2D critical point: {ONSAGER_KT_C:.6f})")
    p.add_argument("--J", type=float, default=1.0, help="coupling strength (0 = non-interacting)")
    p.add_argument("--h", type=float, default=0.0, help="external field (unvalidated if nonzero)")
    p.add_argument("--bit", type=int, choices=(0, 1), default=1, help="encoded bit")
    p.add_argument("--tie-rule", choices=[t.value for t in TieRule],
                   default=TieRule.DECLARE_FAILURE.value)


def _add_grid_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--t-max", type=float, default=None,
                   help="largest sample time (default: adaptive pilot heuristic)")
    p.add_argument("--n-points", type=int, default=240, help="number of sample times")
    p.add_argument("--step-cap", type=int, default=DEFAULT_STEP_CAP,
                   help="per-trajectory attempted-flip budget")


def _cmd_simulate(args) -> int:
    geometry = Geometry(args.dimension, args.side_length)
    couplings = Couplings(args.J, args.h)
    tie_rule = TieRule(args.tie_rule)
    times, truncated = auto_sample_times(
        geometry, couplings, args.kT, args.bit, args.seed,
        tie_rule=tie_rule, n_points=args.n_points, t_max=args.t_max,
        step_cap=args.step_cap,
    )
    config = TrajectoryConfig(geometry, couplings, args.kT, args.bit, args.seed, times)
    curve = estimate_fidelity(config, args.M, tie_rule)
    curve.truncated = truncated
    write_curve(curve, args.out)
    print(f"wrote {curve.n_points} points to {args.out}"
          + (" (truncated by step budget)" if truncated else ""))
    return EXIT_OK


def _cmd_fit(args) -> int:
    curve = read_curve(args.curve)
    gaussian = exponential = None
    if args.model in ("gaussian", "both"):
        gaussian = fit_gaussian_model(curve)
    if args.model in ("exponential", "both"):
        exponential = fit_exponential_model(curve)
    for fit in (gaussian, exponential):
        if fit is None:
            continue
        name = fit.model_kind.value
        print(f"[{name}] lambda = {fit.params.lam:.6g} +/- {fit.lambda_ci90:.3g}")
        if fit.n_eff_ci90 is not None:
            print(f"[{name}] n_eff  = {fit.params.n_eff:.6g} +/- {fit.n_eff_ci90:.3g}")
        print(f"[{name}] chi2 = {fit.chi2:.6g}, dof = {fit.dof}, "
              f"converged = {fit.converged}, ci = {fit.ci_method}")
        if fit.warnings:
            print(f"[{name}] warnings: {', '.join(fit.warnings)}")
    if args.out:
        write_fit_report(args.out, curve_metadata(curve), gaussian, exponential)
        print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    geometry = Geometry(args.dimension, args.side_length)
    couplings = Couplings(args.J, args.h)
    n = geometry.n_sites
    times = geometric_times(max(args.t_max / args.n_points, 1.0 / n),
                            args.t_max, args.n_points, n)
    curve = exact_fidelity(geometry, couplings, args.kT, times,
                           TieRule(args.tie_rule), args.bit)
    write_curve(curve, args.out)
    print(f"wrote exact curve ({curve.n_points} points) to {args.out}")
    return EXIT_OK


def _cmd_analytic(args) -> int:
    n = args.N
    times = _analytic_times(args)
    if args.model == "binomial":
        f = np.array([binomial_fidelity(int(round(n)), args.lam, t) for t in times])
    elif args.model == "gaussian":
        params = ModelParams(n_eff=args.n_eff if args.n_eff else float(n), lam=args.lam)
        f = np.asarray(effective_spin_fidelity(params, times))
    else:
        f = np.asarray(exponential_fidelity(args.lam, times))
    curve = FidelityCurve(
        times=times, fidelity=f, sigma=np.zeros_like(f), ensemble_size=0,
        geometry=Geometry(1, max(int(round(n)), 1)), couplings=Couplings(),
        kT=1.0, encoded_bit=1, tie_rule=TieRule.RANDOM_CHOICE, master_seed=0,
        exact=True,
    )
    extra = {"model": args.model, "model_lambda": repr(args.lam)}
    if args.model == "gaussian":
        extra["model_n_eff"] = repr(args.n_eff if args.n_eff else float(n))
    if args.model in ("binomial", "gaussian"):
        extra["model_n"] = repr(float(n))
    write_curve(curve, args.out, extra)
    print(f"wrote {args.model} tabulation ({curve.n_points} points) to {args.out}")
    return EXIT_OK


def _analytic_times(args) -> np.ndarray:
    if args.linear:
        return np.linspace(0.0, args.t_max, args.n_points)
    return np.concatenate(([0.0], np.geomspace(args.t_max / args.n_points,
                                               args.t_max, args.n_points)))


def _cmd_sweep(args) -> int:
    overrides = {
        "dimension": args.dimension,
        "sizes": args.sizes,
        "kts": args.kts,
        "out_dir": args.out_dir,
        "ensemble_size": args.M,
        "tie_rule": args.tie_rule,
        "master_seed": args.seed,
        "t_max": args.t_max,
        "n_time_points": args.n_points,
        "step_cap": args.step_cap,
    }
    overrides = {k: str(v) for k, v in overrides.items() if v is not None}
    if args.config:
        spec = parse_spec(args.config, overrides)
    else:
        required = ("dimension", "sizes", "kts", "out_dir")
        missing = [k for k in required if k not in overrides]
        if missing:
            raise ValueError(f"without --config, flags are required for: {', '.join(missing)}")
        spec = SweepSpec(
            dimension=int(overrides["dimension"]),
            sizes=[int(x) for x in overrides["sizes"].split(",")],
            kts=[float(x) for x in overrides["kts"].split(",")],
            out_dir=Path(overrides["out_dir"]),
            ensemble_size=int(overrides.get("ensemble_size", 1000)),
            tie_rule=TieRule(overrides.get("tie_rule", "random_choice")),
            master_seed=int(overrides.get("master_seed", 0)),
            t_max=float(overrides["t_max"]) if "t_max" in overrides else None,
            n_time_points=int(overrides.get("n_time_points", 240)),
            step_cap=int(overrides.get("step_cap", DEFAULT_STEP_CAP)),
        )
    result = run_sweep(spec, force=args.force)
    print(f"{len(result.configs)} configurations, {result.n_failed} failed; "
          f"summary at {result.summary_path}")
    return EXIT_PARTIAL if result.n_failed else EXIT_OK


def _cmd_report(args) -> int:
    rows = read_summary(args.summary)
    report = scaling_report(rows, out_dir=args.out_dir)
    for row in report.lambda_vs_n:
        cls = row.classification
        extra = f", scaling: {cls.verdict.value}" if cls else ""
        print(f"{row.dim}D kT={row.kT:g}: lambda slope {row.fit.slope:.3e} "
              f"+/- {row.fit.slope_ci90:.3e} "
              f"({'zero-consistent' if row.slope_consistent_with_zero else 'nonzero'})"
              f"{extra}")
    for row in report.neff_vs_n:
        print(f"{row.dim}D kT={row.kT:g}: n_eff = m N with m = "
              f"{row.proportional.slope:.4f} +/- {row.proportional.slope_ci90:.4f}")
    if args.out_dir:
        print(f"wrote tables to {args.out_dir}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage errors surface as validation errors (exit 1)."""

    def error(self, message):
        raise ValueError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="isingmem",
        description="Ising-ferromagnet bit-storage fidelity: simulation, fitting, sweeps.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="estimate one fidelity curve by Monte Carlo")
    _add_lattice_args(p)
    _add_grid_args(p)
    p.add_argument("--M", type=int, default=10000, help="ensemble size")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--out", required=True, help="output curve file")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="fit models to a curve file")
    p.add_argument("--curve", required=True)
    p.add_argument("--model", choices=("gaussian", "exponential", "both"), default="gaussian")
    p.add_argument("--out", default=None, help="optional fit report file")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("oracle", help="exact master-equation curve for small lattices")
    _add_lattice_args(p)
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--n-points", type=int, default=120)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("analytic", help="tabulate a closed-form fidelity model")
    p.add_argument("--model", choices=("binomial", "gaussian", "exponential"), required=True)
    p.add_argument("--N", type=float, default=1.0, help="spin count (binomial/gaussian)")
    p.add_argument("--n-eff", type=float, default=None,
                   help="effective spin count (gaussian; defaults to N)")
    p.add_argument("--lam", type=float, required=True, help="flip rate per unit time")
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--n-points", type=int, default=200)
    p.add_argument("--linear", action="store_true", help="linear instead of geometric grid")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_analytic)

    p = sub.add_parser("sweep", help="run a (N, kT) grid and aggregate fits")
    p.add_argument("--config", default=None, help="key=value spec file")
    p.add_argument("--dimension", type=int, choices=(1, 2), default=None)
    p.add_argument("--sizes", default=None, help="comma-separated site counts")
    p.add_argument("--kts", default=None, help="comma-separated temperatures")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--M", type=int, default=None)
    p.add_argument("--tie-rule", choices=[t.value for t in TieRule], default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--t-max", type=float, default=None)
    p.add_argument("--n-points", type=int, default=None)
    p.add_argument("--step-cap", type=int, default=None)
    p.add_argument("--force", action="store_true", help="recompute existing outputs")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("report", help="scaling tables from a sweep summary")
    p.add_argument("--summary", required=True, help="path to summary.tsv")
    p.add_argument("--out-dir", default=None, help="where to write the report tables")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(asctime)s %(levelname)s %(message)s",
        )
        return args.func(args)
    except (ValueError, NoDecayError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
