"""Novel-class rejection: train on 4 of 5 blobs, threshold the max softmax score.

    python scripts/novelty.py [--out runs/novelty] [--seeds 5] [--lam 0.25]

For each seed the combined model and a softmax-only twin are trained on the
same split; novelty.csv and hist.csv land in per-run directories and the FPR
at 95% known accuracy is printed side by side.
"""

import argparse
import os

from ole import data as D
from ole.metrics import fpr_at_known_accuracy
from ole.presets import preset
from ole.training import evaluate, load_splits, train_run, write_report_files


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/novelty")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--lam", type=float, default=0.25)
    args = ap.parse_args()
    cfg = preset("novelty", lam=args.lam)
    splits = load_splits(cfg)
    fit, val = D.train_val_split(splits.train, cfg.seed, cfg.val_fraction)
    wins = 0
    for seed in range(args.seeds):
        fpr = {}
        for mode in ("softmax+ole", "softmax"):
            run_cfg = cfg.replace(mode=mode)
            rec = train_run(run_cfg, fit, val, seed)
            acc, report, arrays = evaluate(run_cfg, rec.params, fit, splits)
            write_report_files(os.path.join(args.out, f"{mode.replace('+', '_')}_seed{seed}"), report, arrays, {"test_acc": acc})
            fpr[mode] = fpr_at_known_accuracy(report.novelty_curve, 0.95)
        a, b = fpr["softmax+ole"], fpr["softmax"]
        wins += a is not None and b is not None and a < b
        print(f"seed {seed}: FPR at 95% known accuracy  OLE {a}  softmax {b}")
    print(f"OLE lower in {wins}/{args.seeds} seeds")


if __name__ == "__main__":
    main()
