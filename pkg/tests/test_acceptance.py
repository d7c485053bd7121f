"""Acceptance criteria, one check per criterion.

Run with pytest (one test each; the terminal summary lists PASS/FAIL per
criterion) or directly with ``python3 tests/test_acceptance.py`` to print one
line per criterion.
"""

import contextlib
import functools
import io
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import boundary_states, exact_or_fine, fd_ray_gradient, fine_radius, linear_setup, mlp_setup  # noqa: E402

from prioropt.cli import main as cli_main  # noqa: E402
from prioropt.metrics import best_at, mean_distortion_at  # noqa: E402
from prioropt.modelzoo import HardLabelOracle, VoronoiModel, exact_ray_radius, random_templates  # noqa: E402
from prioropt.priors import implicit_ray_gradient, surrogate_ray_gradient  # noqa: E402
from prioropt.rayoracle import AttackGoal, binary_search_radius, find_upper_radius, sign_query  # noqa: E402
from prioropt.suite import build_instance, instance_ok, load_suite, run_method  # noqa: E402
from prioropt.theory import (advantage_condition, crossing_interval_prior_sign_opt, lemma_checks,  # noqa: E402
                             run_theory_grid, theory_grid)
from prioropt.vecmath import make_rng, normalize  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
THEORY_DS = (16, 64, 256, 3072)
THEORY_QS = (1, 10, 50, 200)
THEORY_SS = (1, 2, 5)
THEORY_TRIALS = 10_000
GRID_SECONDS = 300.0
SUITE_SECONDS = 600.0


def _cos(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


# ---------------------------------------------------------------- closed forms vs Monte Carlo


@functools.cache
def _theory_grid():
    # same cells and substreams as ``prioropt theory`` with its default seed
    t0 = time.perf_counter()
    cells = theory_grid(("sign_opt", "prior_sign_opt", "prior_opt"), THEORY_DS, THEORY_QS, THEORY_SS)
    rows = run_theory_grid(cells, THEORY_TRIALS, seed=0)
    return rows, time.perf_counter() - t0


def _grid_result(kind):
    all_rows, total = _theory_grid()
    rows = [r for r in all_rows if r["kind"] == kind]
    bad = [f"d={r['d']} q={r['q']} a={r['alphas']}" for r in rows if not r["pass"]]
    ok = not bad and total < GRID_SECONDS
    detail = f"{len(rows) - len(bad)}/{len(rows)} cells within 3 stderr, full grid {total:.1f}s"
    if bad:
        detail += "; failing: " + ", ".join(bad[:5])
    return ok, detail


def criterion_1():
    return _grid_result("sign_opt")


def criterion_2():
    return _grid_result("prior_sign_opt")


def criterion_3():
    return _grid_result("prior_opt")


def criterion_4():
    lo, hi = crossing_interval_prior_sign_opt(3072, 200)
    exact, _ = advantage_condition(3072, 200, 1)
    ref = 2 / (math.pi * 3072)
    ok = abs(lo - 0.01422) <= 1e-3 and abs(hi - 0.611) <= 1e-3 and abs(exact - ref) / ref <= 0.05
    return ok, f"interval ({lo:.5f}, {hi:.4f}); exact threshold {exact:.4e} vs 2/(pi d) {ref:.4e}"


def criterion_5():
    failed, rows = [], 0
    for i, d in enumerate((2, 3, 16, 256)):
        rep = lemma_checks(d, 100_000, make_rng(0, i))
        rows += len(rep.rows)
        for r in rep.rows:
            if not r["pass"]:
                z = abs(r["mc"] - r["expected"]) / r["stderr"] if r.get("stderr") else float("nan")
                failed.append(f"{r['check']}@d={d} ({z:.2f} stderr)")
    detail = f"{rows - len(failed)}/{rows} checks pass"
    return not failed, detail + ("; failing: " + ", ".join(failed) if failed else "")


# ---------------------------------------------------------------- oracle-level checks


def criterion_6():
    tol = 1e-4
    rng = make_rng(6)
    worst, count_ok, n_total = 0.0, True, 0
    T = random_templates(8, 6, rng)
    # one class per cell keeps every class region convex, so each ray crosses once
    models = {"linear": linear_setup(8, 6, 6)[0], "voronoi": VoronoiModel(T, np.arange(6))}
    for name, model in models.items():
        templates = T if name == "voronoi" else None
        done = 0
        while done < 100:
            base = templates[0] if templates is not None else np.zeros(8)
            x = base + 0.3 * rng.standard_normal(8)
            goal = AttackGoal(x, model.predict(x))
            th = normalize(rng.standard_normal(8))
            exact = exact_ray_radius(model, x, th, goal)
            if not math.isfinite(exact) or exact > 150:
                continue
            oracle = HardLabelOracle(model)
            br = find_upper_radius(oracle, x, th, goal)
            before = oracle.ledger.count
            r, n = binary_search_radius(oracle, x, th, goal, br.hi, tol, lambda_lo=br.lo)
            bound = math.ceil(math.log2((br.hi - br.lo) / tol))
            count_ok &= n == bound == oracle.ledger.count - before
            worst = max(worst, abs(r - exact))
            done += 1
            n_total += 1
    ok = worst <= tol and count_ok
    return ok, f"{n_total} rays, max |error| {worst:.2e} (tol {tol:g}), query counts match bound: {count_ok}"


def criterion_7():
    out, ok = [], True
    for name in ("linear", "mlp"):
        if name == "linear":
            model, T, rng = linear_setup(16, 5, 7)
            states = boundary_states(model, 100, rng, x=T[0] + 0.3 * rng.standard_normal(16))
        else:
            model, rng = mlp_setup(16, 7, hidden=24, k=4)
            states = boundary_states(model, 100, rng)
        cosines = []
        for goal, th, r in states:
            k, dh = surrogate_ray_gradient(model, goal.x, th, r, goal)
            g = implicit_ray_gradient(k, dh)
            fd = fd_ray_gradient(lambda t: exact_or_fine(model, goal.x, t, goal), th)
            cosines.append(_cos(g, fd))
        ok &= min(cosines) >= 0.995
        out.append(f"{name} min cosine {min(cosines):.6f}")
    return ok, "; ".join(out) + " over 100 states each"


def criterion_8():
    model, rng = mlp_setup(16, 8, hidden=24, k=4)
    tol, sigma = 1e-6, 1e-3
    agree, close_calls, n = 0, 0, 500
    for goal, th, _ in boundary_states(model, n, rng):
        g0 = fine_radius(model, goal.x, th, goal, tol)
        u = normalize(rng.standard_normal(16))
        g1 = fine_radius(model, goal.x, th + sigma * u, goal, tol)
        truth = 1 if g1 > g0 else -1
        got = sign_query(HardLabelOracle(model), goal.x, th, g0, u, sigma, goal)
        if got == truth:
            agree += 1
        elif abs(g1 - g0) < 10 * tol:
            close_calls += 1
    rate = agree / n
    return rate >= 0.99, f"agreement {agree}/{n} = {rate:.3f}; disagreements within 10*tol: {close_calls}/{n - agree}"


# ---------------------------------------------------------------- end-to-end suite


@functools.cache
def _bench():
    cfg = load_suite(CONFIGS / "bench_d128.json")
    t0 = time.perf_counter()
    traces = {m.name: {} for m in cfg.methods}
    for i in range(cfg.instances):
        inst = build_instance(cfg, i)
        if instance_ok(inst):
            continue
        for m in cfg.methods:
            traces[m.name][i] = run_method(inst, m, cfg)
    return cfg, traces, time.perf_counter() - t0


def _paired(traces, a, b, budget, strict=True):
    common = sorted(set(traces[a]) & set(traces[b]))
    wins = 0
    for i in common:
        da, db = best_at(traces[a][i], budget), best_at(traces[b][i], budget)
        wins += da < db if strict else da <= db
    return wins, len(common)


def criterion_9():
    cfg, traces, secs = _bench()
    final = {m: mean_distortion_at(list(t.values()), cfg.budget) for m, t in traces.items()}
    order_ok = final["prior_opt"] < final["prior_sign_opt"] < final["sign_opt"]
    pairs = {
        "PO<PSO": _paired(traces, "prior_opt", "prior_sign_opt", cfg.budget),
        "PSO<SO": _paired(traces, "prior_sign_opt", "sign_opt", cfg.budget),
        "PO2<=PO": _paired(traces, "prior_opt_2s", "prior_opt", cfg.budget, strict=False),
    }
    pair_ok = all(w >= 0.75 * n for w, n in pairs.values())
    ok = order_ok and pair_ok and secs < SUITE_SECONDS
    means = ", ".join(f"{k} {final[k]:.4f}" for k in ("sign_opt", "prior_sign_opt", "prior_opt", "prior_opt_2s"))
    wins = ", ".join(f"{k} {w}/{n}" for k, (w, n) in pairs.items())
    return ok, f"means @{cfg.budget}: {means}; paired wins: {wins}; runtime {secs:.1f}s"


def criterion_10():
    cfg, traces, _ = _bench()

    def gain(name):
        ts = list(traces[name].values())
        return mean_distortion_at(ts, 2000) - mean_distortion_at(ts, 5000)

    ref = gain("prior_opt")
    pure = {n: gain(n) for n in ("pure_prior", "pure_prior_sign")}
    ok = ref > 0 and all(v < 0.1 * ref for v in pure.values())
    return ok, "improvement 2000->5000: prior_opt {:.4f}, ".format(ref) + ", ".join(
        f"{k} {v:.4f}" for k, v in pure.items())


def criterion_12():
    _, traces, _ = _bench()
    runs = bad = partial = 0
    for per in traces.values():
        for tr in per.values():
            runs += 1
            declared = sum(c.declared for c in tr.costs)
            mismatch = any(c.declared != c.ledger_delta for c in tr.costs if not c.partial)
            partial += sum(c.partial for c in tr.costs)
            bad += declared != tr.queries or mismatch
    return bad == 0, f"{runs - bad}/{runs} runs exact (ledger == sum of declared costs); partial phases: {partial}"


# ---------------------------------------------------------------- determinism


def _tree(root):
    return {os.path.relpath(p, root): p.read_bytes() for p in sorted(Path(root).rglob("*")) if p.is_file()}


def criterion_11():
    invocations = {
        "suite": ["suite", "--config", str(CONFIGS / "quick.json")],
        "attack": ["attack", "--config", str(CONFIGS / "attack_mlp.json")],
    }
    with tempfile.TemporaryDirectory() as tmp:
        small_theory = Path(tmp) / "theory.json"
        small_theory.write_text(json.dumps({"trials": 1000, "ds": [16, 64], "qs": [1, 10], "ss": [1, 2]}))
        small_lemmas = Path(tmp) / "lemmas.json"
        small_lemmas.write_text(json.dumps({"trials": 20000, "ds": [3, 16]}))
        invocations["theory"] = ["theory", "--config", str(small_theory)]
        invocations["lemmas"] = ["lemmas", "--config", str(small_lemmas)]
        diffs, files = [], 0
        for name, args in invocations.items():
            for fmt in ("csv", "jsonl"):
                outs = []
                for rep in ("a", "b"):
                    out = Path(tmp) / f"{name}_{fmt}_{rep}"
                    with contextlib.redirect_stdout(io.StringIO()):
                        code = cli_main(args + ["--out", str(out), "--format", fmt, "--seed", "3"])
                    outs.append((code, _tree(out)))
                files += len(outs[0][1])
                if outs[0] != outs[1]:
                    diffs.append(f"{name}/{fmt}")
    return not diffs, f"{len(invocations) * 2} invocation pairs, {files} files byte-identical" + (
        "; differing: " + ", ".join(diffs) if diffs else "")


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 13)}


def _check(n):
    from conftest import ACCEPTANCE
    ok, detail = CRITERIA[n]()
    ACCEPTANCE[n] = (ok, detail)
    assert ok, detail


@pytest.mark.parametrize("n", range(1, 13))
def test_criterion(n):
    _check(n)


if __name__ == "__main__":
    for n, fn in CRITERIA.items():
        ok, detail = fn()
        print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
