import json

import pytest

from prioropt.cli import main
from prioropt.suite import build_instance, instance_ok, suite_from_dict

SUITE = {"name": "cli", "instances": 2, "d": 16, "budget": 300, "budgets": [100, 300], "seed": 1,
         "model": {"k": 4}, "surrogates": {"count": 1},
         "methods": [{"name": "so", "method": "sign_opt", "q": 4}, {"name": "po", "method": "prior_opt", "q": 4}]}


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_suite_command(tmp_path, capsys):
    cfg = write(tmp_path, "s.json", SUITE)
    assert main(["suite", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert "usable instances: 2/2" in capsys.readouterr().out
    assert (tmp_path / "o" / "report.json").exists()


@pytest.mark.parametrize("fmt", ["csv", "jsonl"])
def test_suite_is_byte_identical(tmp_path, fmt):
    cfg = write(tmp_path, "s.json", SUITE)
    for out in ("a", "b"):
        assert main(["suite", "--config", cfg, "--out", str(tmp_path / out), "--format", fmt]) == 0
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


def test_seed_and_budget_overrides(tmp_path):
    cfg = write(tmp_path, "s.json", SUITE)
    main(["suite", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "5", "--budget", "200"])
    stored = json.loads((tmp_path / "a" / "config.json").read_text())
    assert stored["seed"] == 5 and stored["budget"] == 200


def test_attack_command(tmp_path):
    cfg = write(tmp_path, "a.json", {**SUITE, "instance": 1, "run": "po"})
    assert main(["attack", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rec = json.loads((tmp_path / "o" / "run.json").read_text())
    assert rec["method"] == "po" and rec["instance"] == 1
    assert (tmp_path / "o" / "trace.csv").read_text().startswith("query,distortion\n")


def test_attack_unknown_run(tmp_path):
    cfg = write(tmp_path, "a.json", {**SUITE, "run": "missing"})
    assert main(["attack", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_attack_infeasible_instance(tmp_path):
    # benign points far from their templates are often misclassified
    bad = dict(SUITE, model={"k": 4, "offset": 40.0, "sep": 1.0})
    scfg = suite_from_dict(bad)
    i = next(i for i in range(20) if instance_ok(build_instance(scfg, i)))
    cfg = write(tmp_path, "b.json", {**bad, "instance": i})
    assert main(["attack", "--config", cfg, "--out", str(tmp_path / "p")]) == 3


def test_config_errors(tmp_path, capsys):
    assert main(["suite", "--config", write(tmp_path, "x.json", {"instances": 0})]) == 2
    assert "instances" in capsys.readouterr().err
    assert main(["theory", "--config", write(tmp_path, "t.json", {"bogus": 1})]) == 2
    assert main(["suite", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["suite"]) == 2


def test_theory_command(tmp_path):
    cfg = write(tmp_path, "t.json", {"trials": 500, "ds": [16], "qs": [1, 10], "ss": [1]})
    outs = []
    for out in ("a", "b"):
        assert main(["theory", "--config", cfg, "--out", str(tmp_path / out)]) == 0
        outs.append((tmp_path / out / "theory.csv").read_bytes())
    assert outs[0] == outs[1]
    header = outs[0].decode().splitlines()[0]
    assert header.startswith("kind,d,q,s,alphas")


def test_lemmas_command_failure_exit(tmp_path):
    # with only 200 samples the KS distance cannot get under 0.01
    cfg = write(tmp_path, "l.json", {"trials": 200, "ds": [3]})
    assert main(["lemmas", "--config", cfg, "--out", str(tmp_path / "o"), "--format", "jsonl"]) == 4
    rows = [json.loads(l) for l in (tmp_path / "o" / "lemmas.jsonl").read_text().splitlines()]
    assert {r["check"] for r in rows} == {"lemma1_abs", "lemma1_sq", "lemma2_abs", "lemma3_ks"}


def test_lemmas_command_pass(tmp_path):
    cfg = write(tmp_path, "l.json", {"trials": 100000, "ds": [16], "seed": 3})
    assert main(["lemmas", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
