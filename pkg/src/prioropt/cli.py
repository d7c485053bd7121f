"""Command-line entry point: ``prioropt {attack,suite,theory,lemmas}``.

Exit codes: 0 success, 2 config error, 3 budget or infeasible instance,
4 internal invariant violation (including failed theory checks).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .errors import (BadExemplar, BudgetExhausted, ConfigError, InfeasibleCosines, InitFailed, InvalidConfig,
                     InvalidSpec, NoCrossing)
from .suite import (fmt, instance_ok, build_instance, load_suite, run_method, run_record, run_suite, suite_from_dict,
                    write_trace_csv, write_trace_jsonl)
from .theory import lemma_checks, run_theory_grid, theory_grid
from .vecmath import make_rng

log = logging.getLogger("prioropt")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_INVARIANT = 0, 2, 3, 4

THEORY_DEFAULTS = {"trials": 10000, "seed": 0, "ds": [16, 64, 256, 3072], "qs": [1, 10, 50, 200],
                   "ss": [1, 2, 5], "kinds": ["sign_opt", "prior_sign_opt", "prior_opt"], "method": "reduced"}
LEMMA_DEFAULTS = {"trials": 100000, "seed": 0, "ds": [2, 3, 16, 256]}


def _read_json(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError({"--config": str(err)}) from None


def _merge(defaults, path, seed):
    data = _read_json(path)
    unknown = set(data) - set(defaults)
    if unknown:
        raise ConfigError({k: "unknown field" for k in sorted(unknown)})
    cfg = {**defaults, **data}
    if seed is not None:
        cfg["seed"] = seed
    return cfg


def _out_dir(args, default):
    out = args.out or default
    os.makedirs(out, exist_ok=True)
    return out


def _write_rows(path_base, rows, fmt_, columns):
    if fmt_ == "jsonl":
        with open(path_base + ".jsonl", "w", newline="\n") as fh:
            for r in rows:
                fh.write(json.dumps(r, sort_keys=True) + "\n")
        return path_base + ".jsonl"
    with open(path_base + ".csv", "w", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for r in rows:
            cells = []
            for c in columns:
                v = r.get(c, "")
                if isinstance(v, bool):
                    cells.append(str(int(v)))
                elif isinstance(v, float):
                    cells.append(fmt(v))
                elif isinstance(v, list):
                    cells.append(" ".join(fmt(x) for x in v))
                else:
                    cells.append(str(v))
            fh.write(",".join(cells) + "\n")
    return path_base + ".csv"


# ---------------------------------------------------------------- subcommands


def cmd_attack(args) -> int:
    data = _read_json(args.config)
    index = data.pop("instance", 0)
    which = data.pop("run", None)
    cfg = suite_from_dict(data)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.budget is not None:
        cfg.budget = args.budget
    names = [m.name for m in cfg.methods]
    if which is not None and which not in names:
        raise ConfigError({"run": f"no method named {which!r}"})
    method = cfg.methods[names.index(which) if which else 0]
    inst = build_instance(cfg, index)
    why = instance_ok(inst)
    if why:
        log.error("instance %d unusable: %s", index, why)
        return EXIT_INFEASIBLE
    trace = run_method(inst, method, cfg)
    out = _out_dir(args, "out_attack")
    if args.format == "jsonl":
        write_trace_jsonl(os.path.join(out, "trace.jsonl"), trace)
    else:
        write_trace_csv(os.path.join(out, "trace.csv"), trace)
    rec = run_record(inst, method, trace)
    with open(os.path.join(out, "run.json"), "w", newline="\n") as fh:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")
    print(f"{method.name}: distortion {fmt(trace.best_distortion)} after {trace.queries} queries, "
          f"success={trace.success}")
    return EXIT_OK


def cmd_suite(args) -> int:
    cfg = load_suite(args.config) if args.config else None
    if cfg is None:
        raise ConfigError({"--config": "suite needs a config file"})
    if args.seed is not None:
        cfg.seed = args.seed
    if args.budget is not None:
        cfg.budget = args.budget
    out = _out_dir(args, "out_suite")
    report = run_suite(cfg, out, args.format, log=log.info)
    width = max(len(n) for n in report["methods"]) if report["methods"] else 6
    print(f"{'method':<{width}}  " + "  ".join(f"@{b:<9d}" for b in cfg.budgets) + "  auc")
    for name, m in report["methods"].items():
        vals = "  ".join(f"{fmt(v) if v is not None else 'inf':<10s}" for v in m["mean_distortion"])
        print(f"{name:<{width}}  {vals}  {fmt(m['auc']) if m['auc'] is not None else 'inf'}")
    print(f"usable instances: {report['usable_instances']}/{report['instances']}")
    return EXIT_OK


THEORY_COLUMNS = ["kind", "d", "q", "s", "alphas", "mc_mean", "mc_sq", "cf_mean", "cf_lower", "cf_upper", "cf_sq",
                  "stderr_mean", "stderr_sq", "trials", "pass"]


def cmd_theory(args) -> int:
    c = _merge(THEORY_DEFAULTS, args.config, args.seed)
    cells = theory_grid(tuple(c["kinds"]), tuple(c["ds"]), tuple(c["qs"]), tuple(c["ss"]))
    rows = run_theory_grid(cells, int(c["trials"]), int(c["seed"]), c["method"])
    out = _out_dir(args, "out_theory")
    path = _write_rows(os.path.join(out, "theory"), rows, args.format, THEORY_COLUMNS)
    bad = [r for r in rows if not r["pass"]]
    print(f"{len(rows) - len(bad)}/{len(rows)} cells within tolerance; rows in {path}")
    for r in bad:
        print(f"  FAIL {r['kind']} d={r['d']} q={r['q']} alphas={r['alphas']}")
    return EXIT_INVARIANT if bad else EXIT_OK


LEMMA_COLUMNS = ["check", "d", "mc", "expected", "stderr", "pass"]


def cmd_lemmas(args) -> int:
    c = _merge(LEMMA_DEFAULTS, args.config, args.seed)
    rows = []
    for i, d in enumerate(c["ds"]):
        rep = lemma_checks(int(d), int(c["trials"]), make_rng(int(c["seed"]), i))
        rows.extend(rep.rows)
    out = _out_dir(args, "out_lemmas")
    path = _write_rows(os.path.join(out, "lemmas"), rows, args.format, LEMMA_COLUMNS)
    bad = [r for r in rows if not r["pass"]]
    print(f"{len(rows) - len(bad)}/{len(rows)} lemma checks passed; rows in {path}")
    return EXIT_INVARIANT if bad else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prioropt", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, help_ in [("attack", cmd_attack, "one attack run from a suite-style config"),
                            ("suite", cmd_suite, "every method on every instance of a suite"),
                            ("theory", cmd_theory, "closed-form vs Monte Carlo cosine grid"),
                            ("lemmas", cmd_lemmas, "sphere lemma checks")]:
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--budget", type=int, help="override the query budget")
        sp.add_argument("--format", choices=("csv", "jsonl"), default="csv")
        sp.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, InvalidConfig, InvalidSpec) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (BudgetExhausted, InitFailed, NoCrossing, InfeasibleCosines, BadExemplar) as err:
        print(f"infeasible: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except AssertionError as err:
        print(f"invariant violation: {err}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
