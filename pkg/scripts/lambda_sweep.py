"""Validation accuracy of softmax+OLE over a grid of lambda values.

    python scripts/lambda_sweep.py [--out runs/sweep] [--lambdas 0,0.0625,0.25,0.5] [--repeats 5]
"""

import argparse

from ole.presets import SWEEP_LAMBDAS, preset
from ole.training import cmd_sweep_lambda


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/sweep")
    ap.add_argument("--lambdas", default=",".join(f"{v:g}" for v in SWEEP_LAMBDAS))
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    cfg = preset("geometry", mode="softmax+ole", repeats=args.repeats, output_dir=args.out)
    rows, best = cmd_sweep_lambda(cfg, [float(v) for v in args.lambdas.split(",")])
    for r in rows:
        print(f"lambda {r.lam:<8g} {r.mean_acc:.4f} +- {r.std_acc:.4f}")
    print(f"best lambda {best:g} (sweep.csv in {args.out})")


if __name__ == "__main__":
    main()
