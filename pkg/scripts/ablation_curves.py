"""Write closed-form E[gamma] curves (vs prior cosine, q, number of priors) as CSV."""

import argparse
import csv
import os

from prioropt.theory import ablation_curves


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--d", type=int, default=3072)
    ap.add_argument("--q", type=int, default=50)
    ap.add_argument("--out", default="out_ablation")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    for name, rows in ablation_curves(args.d, args.q).items():
        path = os.path.join(args.out, f"{name}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: f"{v:.9g}" if isinstance(v, float) else v for k, v in r.items()})
        print(f"{len(rows)} rows -> {path}")


if __name__ == "__main__":
    main()
