"""Command-line entry point: ``stochid {simulate,identify,bound,sweep,coverage}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .bench_harness import (
    PRESET_HELP,
    ExperimentConfig,
    coverage_experiment,
    nonzero_mean_experiment,
    report_csv,
    report_json,
    run_sweep,
)
from .exceptions import ConfigError, RankDeficiencyError, StochIdError
from .finite_sample_bounds import estimation_error_bound
from .linsys_core import SystemModel, check_model, kalman_recursion, preset
from .subspace_id import identify
from .trajectory_sim import build_batch, read_dataset, simulate, write_dataset

EXIT_OK, EXIT_CONFIG, EXIT_RANK = 0, 2, 3


def _load_model(args):
    if args.config and args.preset:
        raise ConfigError("use either --config or --preset")
    if args.preset:
        try:
            return preset(args.preset)
        except KeyError as exc:
            raise ConfigError(str(exc)) from None
    if not args.config:
        raise ConfigError("a model is required (--config or --preset)")
    try:
        return SystemModel.from_json(args.config)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: invalid JSON ({exc})") from exc


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_simulate(args):
    model = check_model(_load_model(args))
    data = simulate(model, args.N, args.T, args.seed)
    write_dataset(data, args.out or sys.stdout)


def cmd_identify(args):
    data = read_dataset(args.dataset)
    batch = build_batch(data, args.p, args.f, n=args.n)
    for note in batch.warnings:
        logging.warning(note)
    result = identify(batch, args.n)
    _emit(result.to_json(indent=2), args.out)


def cmd_bound(args):
    model = check_model(_load_model(args))
    kal = kalman_recursion(model, args.p + args.f)
    rep = estimation_error_bound(model, kal, args.p, args.f, args.N, args.delta)
    _emit(rep.to_json(indent=2), args.out)


def _experiment(args):
    if not args.config:
        raise ConfigError("--config is required")
    cfg = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def cmd_sweep(args):
    cfg = _experiment(args)
    runner = nonzero_mean_experiment if args.nonzero_mean else run_sweep
    report = runner(cfg)
    writer = report_csv if args.format == "csv" else report_json
    writer(report, args.out or sys.stdout)


def cmd_coverage(args):
    cfg = _experiment(args)
    rec = coverage_experiment(cfg, args.trials, N=args.N)
    _emit(json.dumps(rec, indent=2), args.out)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stochid",
        description="Multi-trajectory stochastic subspace identification and its finite-sample bounds.",
        epilog=PRESET_HELP,
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model=False):
        p.add_argument("--config", help="model JSON" if model else "experiment JSON")
        p.add_argument("--out", help="output path (default: stdout)")
        if model:
            p.add_argument("--preset", help=PRESET_HELP)

    p = sub.add_parser("simulate", help="simulate trajectories to a dataset CSV")
    common(p, model=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("identify", help="identify (A, C, K) from a dataset CSV")
    p.add_argument("dataset")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--f", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("bound", help="evaluate the finite-sample bound on ||G_hat - G||")
    common(p, model=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--f", type=int, required=True)
    p.add_argument("--N", type=float, required=True)
    p.add_argument("--delta", type=float, default=0.05)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("sweep", help="Monte Carlo learning-rate sweep")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.add_argument("--nonzero-mean", action="store_true",
                   help="nonzero initial mean with p growing like c ln N")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("coverage", help="empirical coverage of the high-probability bounds")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--N", type=int)
    p.set_defaults(func=cmd_coverage)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except RankDeficiencyError as exc:
        print(f"stochid: numerical rank error: {exc}", file=sys.stderr)
        return EXIT_RANK
    except (StochIdError, ValueError, KeyError, OSError) as exc:
        print(f"stochid: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
