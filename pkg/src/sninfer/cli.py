"""Command-line interface: ``sninfer <subcommand> [options]``.

Every subcommand accepts ``--config FILE`` with ``key = value`` lines whose
keys are the long option names (dashes or underscores); command-line flags
override the file.  Results go to stdout or to ``--out``.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, dgp, harness, limitdist
from .data import INTERCEPT_NAME, load_config, load_csv, write_csv
from .dq import compute_hits, dq_test
from .exceptions import ExperimentAborted, SnInferError
from .qr import fit_qr


def _floats(text):
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _delta_grid(text):
    """``start:stop:step`` or a comma-separated list."""
    text = str(text)
    if ":" in text:
        parts = [float(v) for v in text.split(":")]
        if len(parts) != 3:
            raise argparse.ArgumentTypeError("sweep must be start:stop:step")
        return harness.sweep(*parts)
    return tuple(_floats(text))


def _methods(text):
    out = tuple(m.strip().lower() for m in str(text).split(",") if m.strip())
    bad = [m for m in out if m not in harness.METHODS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown method(s) {bad}; choose from {harness.METHODS}")
    return out


def _add_data_args(p):
    p.add_argument("csv", nargs="?", default=None, help="input CSV with a header row")
    p.add_argument("--response", default="y", help="response column (default: y)")
    p.add_argument("--covariates", default=None,
                   help="comma-separated covariate columns (default: all others)")
    p.add_argument("--lag", type=int, default=0, help="lag covariates by this many rows")
    p.add_argument("--no-intercept", action="store_true", help="do not prepend a constant")


def _add_experiment_args(p):
    p.add_argument("--preset", default="table1", choices=sorted(dgp.PRESETS))
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--rho-x", type=float, default=None)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--epsilon", type=float, default=None,
                   help="trimming fraction (default 0.1 for quantile, 0.25 for es)")
    p.add_argument("--method", type=_methods, default=("sn",),
                   help="comma-separated subset of sn,iid,hac (default: sn)")
    p.add_argument("--target", default="quantile", choices=harness.TARGETS)
    p.add_argument("--reps", type=int, default=2000)
    p.add_argument("--full", action="store_true", help="use 10000 replications")
    p.add_argument("--nu", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--keep-stats", action="store_true",
                   help="also write raw statistics to <out>.stats.npz (needs --out)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sninfer",
        description="Self-normalized inference for quantile and expected shortfall regressions.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", default=None, help="key = value file supplying option defaults")
        p.add_argument("--out", default=None, help="write CSV here instead of stdout")
        return p

    p = add("fit", "Fit quantile or expected shortfall regressions with SN confidence intervals.")
    _add_data_args(p)
    p.add_argument("--tau", type=_floats, default=[0.5], help="level or comma-separated levels")
    p.add_argument("--target", default="quantile", choices=harness.TARGETS)
    p.add_argument("--side", default="upper", choices=("upper", "lower"))
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--nu", type=float, default=0.05)
    p.add_argument("--dq-lags", type=int, default=10)

    p = add("empirical", "Coefficient and SN interval table over a grid of levels.")
    _add_data_args(p)
    p.add_argument("--taus", type=_floats, default=[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
    p.add_argument("--target", default="quantile", choices=harness.TARGETS)
    p.add_argument("--side", default="upper", choices=("upper", "lower"))
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--nu", type=float, default=0.05)
    p.add_argument("--dq-lags", type=int, default=10)

    p = add("simulate-size", "Rejection frequency of the true null in the simulation design.")
    _add_experiment_args(p)

    p = add("simulate-power", "Rejection frequencies over a sweep of null values.")
    _add_experiment_args(p)
    p.add_argument("--delta2", type=_delta_grid, default=harness.sweep(0.5, 1.5, 0.1),
                   help="null values start:stop:step or a list (default 0.5:1.5:0.1)")
    p.add_argument("--size-adjust", action="store_true",
                   help="append size-adjusted rows computed from the true-null statistics")

    p = add("critval", "Simulate critical values of the SN limit law.")
    p.add_argument("--ell", type=int, default=1)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--reps", type=int, default=limitdist.DEFAULT_REPS)
    p.add_argument("--grid", type=int, default=limitdist.DEFAULT_GRID)
    p.add_argument("--seed", type=int, default=limitdist.DEFAULT_SEED)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--probs", type=_floats, default=list(limitdist.DEFAULT_PROBS))
    p.add_argument("--no-cache", action="store_true")

    p = add("dq-test", "Dynamic quantile test on the hits of a full-sample quantile fit.")
    _add_data_args(p)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--lags", type=int, default=10)

    p = add("generate", "Write one draw from the simulation design to CSV.")
    p.add_argument("--preset", default="table1", choices=sorted(dgp.PRESETS))
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--rho-x", type=float, default=None)
    p.add_argument("--seed", type=int, default=1)
    return parser


def _apply_config(parser, argv):
    """Re-parse with defaults taken from ``--config`` when given."""
    args = parser.parse_args(argv)
    if not args.config:
        return _require_csv(parser, args)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in load_config(args.config).items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("config", "help"):
            parser.error(f"{args.config}: unknown key {key!r} for {args.command}")
        action = known[dest]
        if isinstance(action, (argparse._StoreTrueAction,)):
            defaults[dest] = value.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                defaults[dest] = action.type(value)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                parser.error(f"{args.config}: bad value for {key!r}: {exc}")
        else:
            if action.choices and value not in action.choices:
                parser.error(f"{args.config}: {key!r} must be one of {list(action.choices)}")
            defaults[dest] = value
    sub.set_defaults(**defaults)
    return _require_csv(parser, parser.parse_args(argv))


def _require_csv(parser, args):
    if hasattr(args, "csv") and args.csv is None:
        parser.error(f"{args.command}: an input CSV path is required")
    return args


def _load(args):
    if args.covariates:
        cols = [c.strip() for c in args.covariates.split(",") if c.strip()]
    else:
        with open(args.csv, newline="") as fh:
            header = [h.strip() for h in next(csv.reader(fh), [])]
        cols = [h for h in header if h not in (args.response, INTERCEPT_NAME)]
    return load_csv(args.csv, args.response, cols, intercept=not args.no_intercept, lag=args.lag)


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dgp_config(args):
    overrides = {}
    if args.n is not None:
        overrides["n"] = args.n
    if args.rho is not None:
        overrides["rho"] = args.rho
    if args.rho_x is not None:
        overrides["rho_x"] = args.rho_x
    return dgp.preset(args.preset, **overrides)


def _experiment(args, delta2=(1.0,)):
    return harness.ExperimentConfig(
        dgp=_dgp_config(args), tau=args.tau, epsilon=args.epsilon, methods=args.method,
        target=args.target, delta2_circ=delta2, replications=10000 if args.full else args.reps,
        nu=args.nu, base_seed=args.seed, threads=args.threads,
        keep_stats=args.keep_stats or getattr(args, "size_adjust", False))


def _save_stats(table, out):
    np.savez(str(out) + ".stats.npz", delta2_circ=np.array(table.config.delta2_circ),
             **{m: v for m, v in table.stats.items()})


def _cmd_fit(args, taus):
    data = _load(args)
    rows = harness.run_empirical(data, taus, args.target, args.side, args.epsilon, args.nu,
                                 args.dq_lags)
    _emit(harness.empirical_csv(rows), args.out)


def _cmd_simulate(args, power):
    if args.keep_stats and not args.out:
        raise ValueError("--keep-stats needs --out")
    cfg = _experiment(args, args.delta2 if power else (1.0,))
    try:
        if power:
            table = harness.run_power_experiment(cfg)
        else:
            table = harness.run_size_experiment(cfg)
    except ExperimentAborted as exc:
        if exc.table is not None:
            sys.stderr.write(exc.table.to_csv())
        raise
    text = table.to_csv()
    if power and args.size_adjust:
        size = harness.run_size_experiment(replace(cfg, keep_stats=True))
        adjusted = harness.size_adjust(table, size)
        text += "".join(adjusted.to_csv().splitlines(keepends=True)[2:])
    _emit(text, args.out)
    if args.keep_stats:
        _save_stats(table, args.out)


def _cmd_critval(args):
    table = limitdist.get_table(args.ell, args.epsilon, args.grid, args.reps, args.seed,
                                tuple(args.probs), args.threads, use_cache=not args.no_cache)
    buf = io.StringIO()
    buf.write("# sninfer critical-values v1\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["ell", "epsilon", "grid_steps", "replications", "seed", "probability",
                "quantile", "samples_sha256"])
    for p, q in table.quantiles.items():
        w.writerow([table.ell, repr(table.epsilon), table.grid_steps, table.replications,
                    table.seed, repr(p), repr(q), table.samples_digest])
    _emit(buf.getvalue(), args.out)


def _cmd_dq(args):
    data = _load(args)
    res = dq_test(compute_hits(data, args.tau, fit_qr(data, args.tau).alpha_hat), args.lags)
    text = ("tau,lags,df,statistic,p_value\n"
            f"{args.tau!r},{res.lags},{res.df},{res.statistic!r},{res.p_value!r}\n")
    _emit(text, args.out)


def _cmd_generate(args):
    data = dgp.generate(_dgp_config(args), args.seed)
    if args.out:
        write_csv(data, args.out)
    else:
        write_csv(data, sys.stdout)


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (SnInferError, OSError) as exc:
        sys.stderr.write(f"sninfer: error: {exc}\n")
        return 2
    try:
        if args.command == "fit":
            _cmd_fit(args, args.tau)
        elif args.command == "empirical":
            _cmd_fit(args, args.taus)
        elif args.command == "simulate-size":
            _cmd_simulate(args, False)
        elif args.command == "simulate-power":
            _cmd_simulate(args, True)
        elif args.command == "critval":
            _cmd_critval(args)
        elif args.command == "dq-test":
            _cmd_dq(args)
        elif args.command == "generate":
            _cmd_generate(args)
    except (SnInferError, ValueError, OSError) as exc:
        sys.stderr.write(f"sninfer: error: {exc}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
