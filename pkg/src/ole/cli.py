"""Command-line entry point: ``ole-exp {train,sweep,gradcheck,metrics}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 check
failure, 5 training diverged.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import gradcheck
from .config import ConfigError, load_config
from .data import DataError
from .network import CheckpointError
from .training import TrainingDivergedError, cmd_metrics, cmd_sweep_lambda, cmd_train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_CHECK = 4
EXIT_DIVERGED = 5


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key (repeatable)")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--seed", type=int, help="base seed (overrides seed)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ole-exp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("train", help="train, keep the best repeat, export artifacts"))

    sweep = sub.add_parser("sweep", help="validation accuracy over a list of lambda values")
    _common(sweep)
    sweep.add_argument("--lambdas", default="0,0.0625,0.25,0.5", help="comma-separated lambda values")

    gc = sub.add_parser("gradcheck", help="finite-difference and orthogonal-optimum suites")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--trials", type=int, help="points per suite (default: full sizes)")
    gc.add_argument("--corrupt", type=float, default=0.0, help=argparse.SUPPRESS)

    met = sub.add_parser("metrics", help="recompute the report for a checkpoint")
    _common(met)
    met.add_argument("checkpoint")
    return parser


def _config(args):
    return load_config(args.config, args.set, seed=args.seed, output_dir=args.out)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "gradcheck":
            if args.trials is not None and args.trials < 1:
                raise ConfigError("trials must be >= 1")
            results = gradcheck.run_all(args.seed, args.trials, args.corrupt)
            for r in results:
                print(r.line())
            return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK
        cfg = _config(args)
        if args.command == "train":
            rec = cmd_train(cfg)
            print(f"seed {rec.seed}: val_acc {rec.val_acc:.9g} test_acc {rec.test_acc:.9g}")
        elif args.command == "sweep":
            try:
                lambdas = [float(v) for v in args.lambdas.split(",") if v.strip()]
            except ValueError:
                raise ConfigError(f"--lambdas must be comma-separated numbers, got {args.lambdas!r}") from None
            rows, best = cmd_sweep_lambda(cfg, lambdas)
            for r in rows:
                print(f"lambda {r.lam:.9g}: {r.mean_acc:.9g} +- {r.std_acc:.9g}")
            print(f"best lambda {best:.9g}")
        else:
            rep = cmd_metrics(args.checkpoint, cfg)
            print(f"knn_accuracy {rep.knn_accuracy:.9g} energy_top_C {rep.energy_top_C:.9g}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CheckpointError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
