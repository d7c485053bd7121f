"""Seeded instance suites: generation, attack sweeps, and bit-stable result files."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .attack import INIT_KINDS, AttackConfig, AttackTrace, run_attack
from .errors import ConfigError, EmptySuite, InitFailed
from .estimators import KINDS, PRIOR_KINDS, EstimatorConfig
from .metrics import EPSILON_PRESETS, asr, auc, default_epsilon, excluded_at, mean_distortion_at
from .modelzoo import (HardLabelOracle, QueryLedger, VoronoiModel, model_to_dict, nearest_template_linear,
                       perturb_twin, random_mlp, random_templates, save_model)
from .rayoracle import AttackGoal
from .vecmath import make_rng

FAMILIES = ("softmax_linear", "mlp", "voronoi")
RECIPES = ("twin", "independent")
# substream tags for make_rng(seed, tag, ...)
_INSTANCE, _SURROGATE, _RUN = 0, 1, 2


@dataclass
class ModelSpec:
    family: str = "softmax_linear"
    k: int = 10
    sep: float = 4.0  # typical distance between class templates
    hidden: int = 32
    scale: float = 1.0
    offset: float = 0.3  # std of the benign point around its class template, per sqrt(d)


@dataclass
class SurrogateSpec:
    recipe: str = "twin"
    rho: float = 0.2
    count: int = 2


@dataclass
class MethodSpec:
    name: str
    method: str = "prior_opt"
    n_surrogates: int = 1
    init: str = "rnd"
    q: int = 20
    sigma: float = 1e-3
    bs_tol: float = 1e-4
    tol_mode: str = "absolute"
    g_max: float = 0.1
    T: int = 1000
    n_init: int = 100
    eta_init: float = 0.2

    def attack_config(self, budget: int, seed: int, exemplar=None) -> AttackConfig:
        est = EstimatorConfig(kind=self.method, q=self.q, sigma=self.sigma, bs_tol=self.bs_tol,
                              tol_mode=self.tol_mode)
        return AttackConfig(method=self.method, init=self.init, n_init=self.n_init, exemplar=exemplar, T=self.T,
                            g_max=self.g_max, budget=budget, estimator=est, seed=seed, eta_init=self.eta_init)


@dataclass
class SuiteConfig:
    name: str = "suite"
    instances: int = 20
    d: int = 128
    model: ModelSpec = field(default_factory=ModelSpec)
    surrogates: SurrogateSpec = field(default_factory=SurrogateSpec)
    goal: str = "untargeted"
    seed: int = 0
    budget: int = 5000
    budgets: list[int] = field(default_factory=lambda: [1000, 2000, 5000])
    epsilon: float | str | None = None
    methods: list[MethodSpec] = field(default_factory=list)

    @property
    def eps(self) -> float:
        if self.epsilon is None:
            return default_epsilon(self.d)
        if isinstance(self.epsilon, str):
            return EPSILON_PRESETS[self.epsilon]
        return float(self.epsilon)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _check_fields(cls, data, path, problems) -> dict:
    allowed = set(cls.__dataclass_fields__)
    for key in data:
        if key not in allowed:
            problems[f"{path}{key}"] = "unknown field"
    return {k: v for k, v in data.items() if k in allowed}


def suite_from_dict(data: dict[str, Any]) -> SuiteConfig:
    """Parse and validate a suite config; all problems are reported together as ``ConfigError``."""
    problems: dict[str, str] = {}
    if not isinstance(data, dict):
        raise ConfigError({"": "config must be a JSON object"})
    top = _check_fields(SuiteConfig, data, "", problems)
    model = ModelSpec(**_check_fields(ModelSpec, top.pop("model", {}), "model.", problems))
    surs = SurrogateSpec(**_check_fields(SurrogateSpec, top.pop("surrogates", {}), "surrogates.", problems))
    methods = []
    for i, m in enumerate(top.pop("methods", [])):
        m = _check_fields(MethodSpec, m, f"methods[{i}].", problems)
        if "name" not in m:
            problems[f"methods[{i}].name"] = "required"
            m["name"] = f"method{i}"
        methods.append(MethodSpec(**m))
    cfg = SuiteConfig(model=model, surrogates=surs, methods=methods, **top)
    problems.update(validate_suite(cfg))
    if problems:
        raise ConfigError(problems)
    return cfg


def validate_suite(cfg: SuiteConfig) -> dict[str, str]:
    p: dict[str, str] = {}
    if cfg.instances < 1:
        p["instances"] = "must be >= 1"
    if cfg.d < 2:
        p["d"] = "must be >= 2"
    if cfg.model.family not in FAMILIES:
        p["model.family"] = f"must be one of {FAMILIES}"
    if cfg.model.k < 2:
        p["model.k"] = "must be >= 2"
    if cfg.surrogates.recipe not in RECIPES:
        p["surrogates.recipe"] = f"must be one of {RECIPES}"
    if cfg.surrogates.rho < 0:
        p["surrogates.rho"] = "must be >= 0"
    if cfg.goal not in ("untargeted", "targeted"):
        p["goal"] = "must be 'untargeted' or 'targeted'"
    if cfg.budget < 1:
        p["budget"] = "must be >= 1"
    if list(cfg.budgets) != sorted(cfg.budgets) or any(b < 1 for b in cfg.budgets):
        p["budgets"] = "must be positive and ascending"
    if isinstance(cfg.epsilon, str) and cfg.epsilon not in EPSILON_PRESETS:
        p["epsilon"] = f"unknown preset; known: {sorted(EPSILON_PRESETS)}"
    elif isinstance(cfg.epsilon, (int, float)) and not cfg.epsilon > 0:
        p["epsilon"] = "must be positive"
    if not cfg.methods:
        p["methods"] = "at least one method required"
    names = [m.name for m in cfg.methods]
    if len(set(names)) != len(names):
        p["methods"] = "method names must be unique"
    for i, m in enumerate(cfg.methods):
        if m.method not in KINDS:
            p[f"methods[{i}].method"] = f"must be one of {KINDS}"
        if m.init not in INIT_KINDS:
            p[f"methods[{i}].init"] = f"must be one of {INIT_KINDS}"
        if m.method in PRIOR_KINDS and m.n_surrogates < 1:
            p[f"methods[{i}].n_surrogates"] = "prior methods need at least one surrogate"
        if m.n_surrogates > cfg.surrogates.count:
            p[f"methods[{i}].n_surrogates"] = f"exceeds surrogates.count={cfg.surrogates.count}"
        if m.q < 1 or m.q > cfg.d:
            p[f"methods[{i}].q"] = "must satisfy 1 <= q <= d"
        for name in ("sigma", "bs_tol", "g_max", "eta_init"):
            if not getattr(m, name) > 0:
                p[f"methods[{i}].{name}"] = "must be positive"
        if m.T < 1:
            p[f"methods[{i}].T"] = "must be >= 1"
        if m.tol_mode not in ("absolute", "relative"):
            p[f"methods[{i}].tol_mode"] = "must be 'absolute' or 'relative'"
        if m.init == "targeted" and cfg.goal != "targeted":
            p[f"methods[{i}].init"] = "targeted init needs goal 'targeted'"
    return p


def load_suite(path) -> SuiteConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as err:
        raise ConfigError({"": f"cannot read config: {err}"}) from None
    except json.JSONDecodeError as err:
        raise ConfigError({"": f"invalid JSON: {err}"}) from None
    return suite_from_dict(data)


# ---------------------------------------------------------------- instances


@dataclass
class Instance:
    index: int
    target_model: Any
    surrogates: list
    goal: AttackGoal
    exemplar: np.ndarray | None
    templates: np.ndarray


def _make_model(spec: ModelSpec, templates, d, rng):
    if spec.family == "softmax_linear":
        return nearest_template_linear(templates)
    if spec.family == "voronoi":
        return VoronoiModel(templates, np.arange(spec.k))
    return random_mlp(d, spec.hidden, spec.k, rng, spec.scale)


def build_instance(cfg: SuiteConfig, i: int) -> Instance:
    """Instance ``i`` of the suite; depends only on ``(cfg, i)``."""
    rng = make_rng(cfg.seed, _INSTANCE, i)
    d, spec = cfg.d, cfg.model
    templates = random_templates(d, spec.k, rng, spec.sep)
    target = _make_model(spec, templates, d, rng)
    y = i % spec.k
    if spec.family == "mlp":
        # the MLP ignores templates; use the model's own label at a random point
        x = rng.standard_normal(d)
        y = target.predict(x)
    else:
        x = templates[y] + spec.offset * rng.standard_normal(d) / math.sqrt(d)
    t = None
    exemplar = None
    if cfg.goal == "targeted":
        t = (y + 1) % spec.k
        exemplar = templates[t].copy()
    surrogates = []
    for j in range(cfg.surrogates.count):
        srng = make_rng(cfg.seed, _SURROGATE, i, j)
        if cfg.surrogates.recipe == "twin":
            surrogates.append(perturb_twin(target, cfg.surrogates.rho, srng))
        else:
            surrogates.append(_make_model(spec, random_templates(d, spec.k, srng, spec.sep), d, srng))
    return Instance(i, target, surrogates, AttackGoal(x, y, t), exemplar, templates)


def instance_ok(inst: Instance) -> str | None:
    """Reason to skip the instance, or ``None``; uses the model directly, not the oracle."""
    if inst.target_model.predict(inst.goal.x) != inst.goal.y:
        return "misclassified"
    if inst.exemplar is not None and inst.target_model.predict(inst.exemplar) != inst.goal.target:
        return "exemplar_not_target"
    return None


def run_method(inst: Instance, m: MethodSpec, cfg: SuiteConfig, budget: int | None = None) -> AttackTrace:
    budget = budget or cfg.budget
    init = "targeted" if inst.goal.targeted and m.init == "rnd" else m.init
    mm = MethodSpec(**{**asdict(m), "init": init})
    acfg = mm.attack_config(budget, cfg.seed, inst.exemplar)
    oracle = HardLabelOracle(inst.target_model, QueryLedger())
    rng = make_rng(cfg.seed, _RUN, inst.index)
    n_sur = m.n_surrogates if (m.method in PRIOR_KINDS or init == "pgd") else 0
    return run_attack(oracle, inst.goal, inst.surrogates[:n_sur], acfg, rng)


# ---------------------------------------------------------------- output


def fmt(v: float) -> str:
    return "%.9g" % v


def write_trace_csv(path, trace) -> None:
    pts = getattr(trace, "points", trace)
    with open(path, "w", newline="\n") as fh:
        fh.write("query,distortion\n")
        for q, dist in pts:
            fh.write(f"{int(q)},{fmt(dist)}\n")


def write_trace_jsonl(path, trace) -> None:
    pts = getattr(trace, "points", trace)
    with open(path, "w", newline="\n") as fh:
        for q, dist in pts:
            fh.write(json.dumps({"query": int(q), "distortion": _num(dist)}) + "\n")


def _num(v: float):
    # JSON has no infinities; keep them as null
    return float(v) if math.isfinite(v) else None


def _unnum(v):
    return math.inf if v is None else float(v)


def run_record(inst: Instance, m: MethodSpec, trace: AttackTrace) -> dict[str, Any]:
    return {
        "instance": inst.index,
        "method": m.name,
        "kind": m.method,
        "y": inst.goal.y,
        "target": inst.goal.target,
        "success": bool(trace.success),
        "final_distortion": _num(trace.best_distortion),
        "queries": trace.queries,
        "iterations": trace.iterations,
        "declared_queries": sum(c.declared for c in trace.costs),
        "partial_phases": sum(1 for c in trace.costs if c.partial),
        "events": sorted({e.split(":")[0] for e in trace.events}),
        "points": [[int(q), _num(dist)] for q, dist in trace.points],
    }


def metric_report(records: list[dict], cfg: SuiteConfig) -> dict[str, Any]:
    """Per-method mean distortion, ASR at every budget, and mean AUC over ``[0, cfg.budget]``."""
    if not records:
        raise EmptySuite("no runs to summarize")
    out = {}
    for m in cfg.methods:
        traces = [[(q, _unnum(dist)) for q, dist in r["points"]] for r in records if r["method"] == m.name]
        if not traces:
            continue
        areas = [auc(t, cfg.budget) for t in traces if t]
        out[m.name] = {
            "runs": len(traces),
            "budgets": list(cfg.budgets),
            "mean_distortion": [_num(mean_distortion_at(traces, b)) for b in cfg.budgets],
            "excluded": [excluded_at(traces, b) for b in cfg.budgets],
            "asr": [asr(traces, b, cfg.eps) for b in cfg.budgets],
            "auc": _num(float(np.mean(areas))) if areas else None,
        }
    return {"epsilon": cfg.eps, "methods": out}


def report_from_summary(path, cfg: SuiteConfig) -> dict[str, Any]:
    with open(path) as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    return metric_report(records, cfg)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=False)


def run_suite(cfg: SuiteConfig, out_dir=None, fmt_: str = "csv", log=None) -> dict[str, Any]:
    """Run every method on every usable instance; write traces, summary and report under ``out_dir``."""
    log = log or (lambda msg: None)
    if out_dir is not None:
        os.makedirs(os.path.join(out_dir, "traces"), exist_ok=True)
        os.makedirs(os.path.join(out_dir, "models"), exist_ok=True)
    records, skipped = [], []
    for i in range(cfg.instances):
        inst = build_instance(cfg, i)
        why = instance_ok(inst)
        if why:
            skipped.append({"instance": i, "reason": why})
            log(f"instance {i}: skipped ({why})")
            continue
        if out_dir is not None:
            save_model(inst.target_model, os.path.join(out_dir, "models", f"{i:03d}_target.json"))
            used = max([m.n_surrogates for m in cfg.methods] + [0])
            for j, s in enumerate(inst.surrogates[:used]):
                save_model(s, os.path.join(out_dir, "models", f"{i:03d}_surrogate{j}.json"))
        for m in cfg.methods:
            try:
                trace = run_method(inst, m, cfg)
            except InitFailed as err:
                skipped.append({"instance": i, "method": m.name, "reason": f"init_failed: {err}"})
                log(f"instance {i} {m.name}: init failed")
                continue
            rec = run_record(inst, m, trace)
            records.append(rec)
            log(f"instance {i} {m.name}: distortion {fmt(trace.best_distortion)} after {trace.queries} queries")
            if out_dir is not None:
                base = os.path.join(out_dir, "traces", f"{i:03d}_{m.name}")
                if fmt_ == "jsonl":
                    write_trace_jsonl(base + ".jsonl", trace)
                else:
                    write_trace_csv(base + ".csv", trace)
    report = metric_report(records, cfg)
    report["instances"] = cfg.instances
    report["usable_instances"] = cfg.instances - len({s["instance"] for s in skipped if "method" not in s})
    report["skipped"] = skipped
    if out_dir is not None:
        with open(os.path.join(out_dir, "summary.jsonl"), "w", newline="\n") as fh:
            for r in records:
                fh.write(_dump(r) + "\n")
        with open(os.path.join(out_dir, "report.json"), "w", newline="\n") as fh:
            fh.write(json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n")
        with open(os.path.join(out_dir, "config.json"), "w", newline="\n") as fh:
            fh.write(json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n")
    report["records"] = records
    return report


def model_provenance(inst: Instance) -> dict[str, Any]:
    return {"target": model_to_dict(inst.target_model), "surrogates": [model_to_dict(s) for s in inst.surrogates]}
