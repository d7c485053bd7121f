"""Distribution of standardized Monte Carlo errors across seeds.

For a sound estimator and closed form the z-scores should look standard
normal; a lone |z| > 3 at one seed is then a chance excursion.
"""

import argparse

import numpy as np

from prioropt.theory import TheorySpec, closed_form, lemma_checks, mc_estimate_gamma
from prioropt.vecmath import make_rng


def summarize(label, zs):
    zs = np.asarray(zs)
    print(f"{label:<34} mean {zs.mean():+.3f}  sd {zs.std(ddof=1):.3f}  "
          f"max|z| {np.abs(zs).max():.2f}  share>3 {np.mean(np.abs(zs) > 3):.3f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=40)
    ap.add_argument("--trials", type=int, default=100_000)
    args = ap.parse_args()

    for d in (2, 3, 16, 256):
        zs = {}
        for s in range(args.seeds):
            for r in lemma_checks(d, args.trials, make_rng(1000 + s, d)).rows:
                if "stderr" in r:
                    zs.setdefault(r["check"], []).append((r["mc"] - r["expected"]) / max(r["stderr"], 1e-12))
        for name, v in zs.items():
            summarize(f"{name} d={d}", v)

    for kind, sp in [("prior_sign_opt", TheorySpec(256, 10, (0.0, 0.0))),
                     ("prior_opt", TheorySpec(256, 10, (0.0, 0.0))),
                     ("prior_opt", TheorySpec(3072, 200, (0.3,)))]:
        cf = closed_form(kind, sp)
        zq = []
        for s in range(args.seeds):
            st = mc_estimate_gamma(kind, sp, 10_000, make_rng(2000 + s))
            zq.append((st.mean_gamma_sq - cf["cf_sq"]) / st.stderr_sq)
        summarize(f"{kind} E[g^2] d={sp.d} q={sp.q} a={sp.alphas}", zq)


if __name__ == "__main__":
    main()
