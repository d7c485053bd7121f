"""Run a suite and report mean distortion plus paired win counts between methods at each budget."""

import argparse
import itertools
import time

from prioropt.metrics import best_at, mean_distortion_at
from prioropt.suite import build_instance, instance_ok, load_suite, run_method


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("config", nargs="?", default="configs/bench_d128.json")
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()
    cfg = load_suite(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    t0 = time.perf_counter()
    traces = {m.name: {} for m in cfg.methods}
    for i in range(cfg.instances):
        inst = build_instance(cfg, i)
        if instance_ok(inst):
            continue
        for m in cfg.methods:
            traces[m.name][i] = run_method(inst, m, cfg)
    print(f"{cfg.name}: seed {cfg.seed}, {time.perf_counter() - t0:.1f}s")
    width = max(len(n) for n in traces)
    print(f"{'method':<{width}}  " + "  ".join(f"@{b:<8d}" for b in cfg.budgets))
    for name, per in traces.items():
        vals = [mean_distortion_at(list(per.values()), b) for b in cfg.budgets]
        print(f"{name:<{width}}  " + "  ".join(f"{v:<9.4f}" for v in vals))
    print("\npaired wins (row strictly below column) at the final budget")
    for a, b in itertools.permutations(traces, 2):
        common = sorted(set(traces[a]) & set(traces[b]))
        wins = sum(best_at(traces[a][i], cfg.budget) < best_at(traces[b][i], cfg.budget) for i in common)
        print(f"  {a:<{width}} < {b:<{width}}  {wins}/{len(common)}")


if __name__ == "__main__":
    main()
