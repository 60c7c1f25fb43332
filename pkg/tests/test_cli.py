import json

import numpy as np
import pandas as pd
import pytest
import yaml

from ppsurv.cli import main

MEL = {
    "schema": {"time": "failtime", "event": "rfscens", "stratum": "stratum", "covariates": ["trt"]},
    "current": {"path": "builtin:melanoma", "select": {"study": 1690}},
    "historical": [{"path": "builtin:melanoma", "select": {"study": 1684}}],
    "partition": {"n_intervals": [2, 2]},
    "sampler": {"n_mc": 400, "n_burnin": 20},
}


def write_cfg(tmp_path, **extra):
    cfg = {**MEL, **extra}
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(cfg))
    return str(p)


def test_analyze_fixed_outputs_and_determinism(tmp_path):
    cfg = write_cfg(tmp_path, a0={"fixed": 0.5})
    assert main(["analyze-fixed", "--config", cfg, "--seed", "3", "--out", str(tmp_path / "a")]) == 0
    assert main(["analyze-fixed", "--config", cfg, "--seed", "3", "--out", str(tmp_path / "b")]) == 0
    for name in ("draws.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() != b""
    assert (tmp_path / "a" / "draws.csv").read_bytes() == (tmp_path / "b" / "draws.csv").read_bytes()
    s = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert s["config"]["seed"] == 3 and s["config"]["sampler"]["n_mc"] == 400
    assert {"beta_trt", "lambda_1_1", "lambda0_2_2"} <= set(s["parameters"])
    assert pd.read_csv(tmp_path / "a" / "draws.csv").shape[0] == 400


def test_missing_seed_is_recorded(tmp_path):
    cfg = write_cfg(tmp_path, a0={"fixed": 0.5})
    assert main(["analyze-fixed", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    s = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert isinstance(s["config"]["seed"], int) and s["seed"] == s["config"]["seed"]


def test_a0_length_mismatch_exit_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, a0={"fixed": [0.5, 0.5]})
    assert main(["analyze-fixed", "--config", cfg, "--seed", "1", "--out", str(tmp_path)]) == 2
    assert "a0.fixed" in capsys.readouterr().err


def test_unknown_field_exit_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, a0={"fixed": 0.5})
    assert main(["analyze-fixed", "--config", cfg, "--set", "sampler.nmc=5", "--out", str(tmp_path)]) == 2
    assert "sampler.nmc" in capsys.readouterr().err


def test_runtime_failure_exit_3(tmp_path, capsys):
    cfg = write_cfg(tmp_path, a0={"fixed": 0.5}, partition={"n_intervals": [1, 1]},
                    design={"n_subjects": 30, "n_events": 2}, sampling_prior={"default": "DN"},
                    prior={"lambda": {"kind": "improper"}}, B=3)
    # an improper hazard prior with two-event trials and many intervals cannot be fitted
    code = main(["design-fixed", "--config", cfg, "--seed", "1", "--out", str(tmp_path),
                 "--set", "partition.n_intervals=[4,3]"])
    assert code == 3
    assert "seed" in capsys.readouterr().err


def test_approximate_then_analyze_random(tmp_path):
    cfg = write_cfg(tmp_path, a0={"beta_shape1": 1.0, "beta_shape2": 1.0}, approximate={"L": 300})
    out = tmp_path / "ap"
    assert main(["approximate-prior", "--config", cfg, "--seed", "2", "--out", str(out)]) == 0
    assert pd.read_csv(out / "prior_beta_draws.csv").shape == (300, 1)
    mvn = json.loads((out / "prior_beta_mvn.json").read_text())
    assert mvn["components"][0]["weight"] == 1.0
    cfg2 = write_cfg(tmp_path, a0={"mixture": str(out / "prior_beta_mvn.json")})
    assert main(["analyze-random", "--config", cfg2, "--seed", "2", "--out", str(tmp_path / "ar")]) == 0
    s = json.loads((tmp_path / "ar" / "summary.json").read_text())
    assert s["a0"] == "marginalized" and s["prior_beta_mvn"] == mvn["components"]


def test_external_mixture_echoed_in_design(tmp_path):
    mix = {"components": [{"mean": [-0.3], "cov": [[0.05]], "weight": 0.6},
                          {"mean": [0.0], "cov": [[0.2]], "weight": 0.4}]}
    (tmp_path / "mix.json").write_text(json.dumps(mix))
    cfg = write_cfg(tmp_path, a0={"mixture": "mix.json"}, design={"n_subjects": 90, "n_events": 30},
                    sampling_prior={"point": {"beta": [-0.3], "lambda": [[0.5, 0.3], [1.0, 0.4]]}}, B=2)
    assert main(["design-random", "--config", cfg, "--seed", "4", "--out", str(tmp_path / "d")]) == 0
    d = json.loads((tmp_path / "d" / "design.json").read_text())
    assert [c["weight"] for c in d["config"]["prior_beta_mvn"]] == [0.6, 0.4]
    assert d["resolved_config"]["a0"]["mixture"] == str(tmp_path / "mix.json")
    assert d["B"] == 2


def test_set_paths_resolve_against_cwd(tmp_path, monkeypatch):
    mix = {"components": [{"mean": [-0.3], "cov": [[0.05]], "weight": 1.0}]}
    (tmp_path / "work").mkdir()
    (tmp_path / "work" / "mix.json").write_text(json.dumps(mix))
    cfg = write_cfg(tmp_path, design={"n_subjects": 90, "n_events": 30},
                    sampling_prior={"point": {"beta": [-0.3], "lambda": [[0.5, 0.3], [1.0, 0.4]]}}, B=1)
    monkeypatch.chdir(tmp_path / "work")
    assert main(["design-random", "--config", cfg, "--seed", "4", "--out", "d",
                 "--set", "a0.mixture=mix.json"]) == 0
    assert (tmp_path / "work" / "d" / "design.json").exists()


def test_design_missing_sampling_prior_exit_2(tmp_path):
    cfg = write_cfg(tmp_path, a0={"fixed": 0.5}, design={"n_subjects": 90, "n_events": 30})
    assert main(["design-fixed", "--config", cfg, "--seed", "1", "--out", str(tmp_path)]) == 2


def test_design_worker_invariance_and_table(tmp_path):
    cfg = write_cfg(tmp_path, a0={"fixed": 0.5}, design={"n_subjects": 90, "n_events": 30, "enroll_param": 2.0},
                    sampling_prior={"default": "DA"}, B=4)
    for w in ("1", "2"):
        assert main(["design-fixed", "--config", cfg, "--seed", "6", "--workers", w,
                     "--out", str(tmp_path / w)]) == 0
    a = json.loads((tmp_path / "1" / "design.json").read_text())
    b = json.loads((tmp_path / "2" / "design.json").read_text())
    assert a["probabilities"] == b["probabilities"] and a["mcse"] == b["mcse"]
    t = pd.read_csv(tmp_path / "1" / "design_table.csv")
    assert list(t.columns) == ["a0", "n_events", "n_subjects", "estimate", "mcse", "B"]


def test_sampling_prior_files(tmp_path):
    pd.DataFrame({"beta_trt": [-0.2, -0.3]}).to_csv(tmp_path / "b.csv", index=False)
    pd.DataFrame({"l1": [0.5, 0.6], "l2": [0.3, 0.2]}).to_csv(tmp_path / "l1.csv", index=False)
    pd.DataFrame({"l1": [1.0], "l2": [0.4]}).to_csv(tmp_path / "l2.csv", index=False)
    cfg = write_cfg(tmp_path, a0={"fixed": 0.2}, design={"n_subjects": 90, "n_events": 30},
                    sampling_prior={"beta": "b.csv", "lambda": ["l1.csv", "l2.csv"]}, B=2)
    assert main(["design-fixed", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "o")]) == 0


def test_simulate_roundtrip(tmp_path):
    cfg = write_cfg(tmp_path, design={"n_subjects": 120, "n_events": 40, "enroll_param": 3.0},
                    sampling_prior={"default": "DA"})
    out = tmp_path / "s"
    assert main(["simulate", "--config", cfg, "--seed", "8", "--out", str(out)]) == 0
    meta = json.loads((out / "simulate.json").read_text())
    assert meta["n_events"] <= 40
    again = {**MEL, "schema": meta["schema"], "current": {"path": str(out / "simulated_trial.csv")},
             "historical": [], "partition": {"n_intervals": [1, 1]}}
    p = tmp_path / "again.yaml"
    p.write_text(yaml.safe_dump(again))
    assert main(["analyze-fixed", "--config", str(p), "--seed", "1", "--out", str(tmp_path / "fit")]) == 0


def test_summarize_command(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert main(["summarize", "--config", cfg, "--out", str(tmp_path)]) == 0
    t = pd.read_csv(tmp_path / "summary_table.csv")
    assert len(t) == 8 and t.n.sum() == 381
    assert "137.0" in capsys.readouterr().out


def test_json_config_accepted(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({**MEL, "a0": {"fixed": 0.5}}))
    assert main(["analyze-fixed", "--config", str(p), "--seed", "1", "--out", str(tmp_path / "o")]) == 0
