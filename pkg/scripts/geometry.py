"""Train OLE-only and softmax-only models on the 3-blob task and export both.

    python scripts/geometry.py [--out runs/geometry] [--repeats 5]

Each mode gets its own directory with angles.csv, spectrum.csv, features.csv,
metrics.csv and report.json; a one-line summary per mode goes to stdout.
"""

import argparse
import os

from ole.presets import preset
from ole.training import cmd_train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/geometry")
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    for mode in ("ole", "softmax"):
        cfg = preset("geometry", mode=mode, repeats=args.repeats, output_dir=os.path.join(args.out, mode))
        rec = cmd_train(cfg)
        r = rec.report
        print(
            f"{mode:8s} seed {rec.seed}  test acc {rec.test_acc:.4f}  1-NN {r.knn_accuracy:.4f}  "
            f"intra {r.mean_intra_angle:6.2f} deg  inter {r.mean_inter_angle:6.2f} deg  energy_top_3 {r.energy_top_C:.4f}"
        )


if __name__ == "__main__":
    main()
