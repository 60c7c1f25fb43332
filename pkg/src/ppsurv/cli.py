"""Command-line front end.

    ppsurv analyze-fixed --config run.yaml --out results/ --seed 1
    ppsurv design-fixed --config design.yaml --set design.n_events=350 --set B=200

Configuration is a YAML (or JSON) document with the sections listed in
``DEFAULTS``; ``--set dotted.key=value`` overrides individual fields.  Every
result file embeds the fully resolved configuration.  Exit codes: 0 success,
2 configuration / validation error, 3 sampler or elicitation failure.
"""
from __future__ import annotations

import argparse
import copy
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
import yaml

from . import files
from .data import (DEFAULT_SCHEMA, IntervalPartition, StratumMap, default_partition, load_dataset,
                   melanoma_path, read_rows, summarize)
from .design import (HypothesisSpec, SamplingPrior, build_default_sampling_priors, build_point_mass_prior,
                     estimate_operating_characteristic, operating_characteristics_table)
from .errors import ConfigError, PPSurvError, RuntimeFailure
from .model import A0Spec, BetaPrior, HazardPrior, PriorSpec
from .samplers import SamplerConfig, approximate_prior_beta, derive_seed, fit_single_mvn, phm_fixed_a0, phm_random_a0
from .trialsim import CovariatePool, TrialDesignConfig, construct_observed_data, simulate_complete_data

log = logging.getLogger("ppsurv")

COMMANDS = ("analyze-fixed", "analyze-random", "approximate-prior", "design-fixed", "design-random",
            "simulate", "summarize")

DEFAULTS = {
    "schema": dict(DEFAULT_SCHEMA),
    "current": None,              # {path, select}
    "historical": [],             # [{path, select}, ...]
    "partition": {"n_intervals": [1], "cuts": None},
    "prior": {
        "beta": {"kind": "normal", "mean": 0.0, "var": 1e3},
        "lambda": {"kind": "gamma", "shape": 1e-5, "rate": 1e-5},
        "lambda0": {"kind": "gamma", "shape": 1e-5, "rate": 1e-5},
        "shared_baseline": False,
    },
    "a0": {"fixed": None, "beta_shape1": None, "beta_shape2": None, "mixture": None},
    "sampler": {"n_mc": 10000, "n_burnin": 200, "width_beta": 1.0, "width_loglam": 1.0, "max_steps": 10},
    "approximate": {"L": None},
    "design": {"n_subjects": None, "n_events": None, "enroll_dist": "uniform", "enroll_param": 1.0,
               "randomization": 0.5, "censor_dist": "none", "censor_param": None, "dropout_prob": 0.0,
               "dropout_bound": None, "t_min": 0.0, "t_max": "inf"},
    "hypothesis": {"delta": 0.0, "null": ">=", "gamma": 0.975},
    "sampling_prior": {"default": None, "beta": None, "lambda": None, "point": None, "joint": False},
    "B": 1000,
    "max_failure_rate": 0.01,
    "level": 0.95,
    "seed": None,
    "workers": 1,
    "out": "out",
}


# ---------------------------------------------------------------------------
# configuration

def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        if k is None:  # YAML reads a bare `null:` key as None
            k = "null"
        where = f"{path}{k}"
        if k not in base:
            raise ConfigError(f"{where}: unknown configuration field")
        if isinstance(base[k], dict) and base[k] and k not in ("schema",):
            if not isinstance(v, dict):
                raise ConfigError(f"{where}: expected a section")
            out[k] = _merge(base[k], v, where + ".")
        else:
            out[k] = v
    return out


def _set_path(cfg, dotted, raw):
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node, dict) or k not in node:
            raise ConfigError(f"{dotted}: unknown configuration field")
        node = node[k]
    if not isinstance(node, dict) or (keys[-1] not in node and node is not cfg.get("schema")):
        raise ConfigError(f"{dotted}: unknown configuration field")
    node[keys[-1]] = yaml.safe_load(raw)


def _anchor(value, base: Path):
    if isinstance(value, list):
        return [_anchor(v, base) for v in value]
    if not isinstance(value, str) or value.startswith("builtin:") or Path(value).is_absolute():
        return value
    return str(base / value)


def _anchor_paths(doc: dict, base: Path) -> None:
    """Make file paths written in a config file relative to that file."""
    sections = [doc.get("current")] + list(doc.get("historical") or [])
    for sec in sections:
        if isinstance(sec, dict) and "path" in sec:
            sec["path"] = _anchor(sec["path"], base)
    for sec, keys in (("a0", ("mixture",)), ("sampling_prior", ("beta", "lambda"))):
        node = doc.get(sec)
        if isinstance(node, dict):
            for k in keys:
                if k in node:
                    node[k] = _anchor(node[k], base)


def load_config(path=None, overrides=(), **flags) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {path}")
        doc = yaml.safe_load(p.read_text()) or {}
        if not isinstance(doc, dict):
            raise ConfigError("config file must contain a mapping")
        _anchor_paths(doc, p.parent)
        cfg = _merge(cfg, doc)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        _set_path(cfg, k.strip(), v)
    for k, v in flags.items():
        if v is not None:
            cfg[k] = v
    return cfg


def _resolve(cfg, p):
    if p is None:
        return None
    if str(p).startswith("builtin:"):
        name = str(p).split(":", 1)[1]
        if name != "melanoma":
            raise ConfigError(f"unknown builtin dataset {name!r}")
        return melanoma_path()
    return Path(p)


def _dataset_specs(cfg, need_current, need_hist):
    cur = cfg["current"]
    hist = cfg["historical"] or []
    if isinstance(hist, dict):
        hist = [hist]
    if need_current and not cur:
        raise ConfigError("current: a current dataset is required for this command")
    if need_hist and not hist:
        raise ConfigError("historical: at least one historical dataset is required for this command")
    for where, spec in [("current", cur)] + [(f"historical[{j}]", h) for j, h in enumerate(hist)]:
        if spec is not None and (not isinstance(spec, dict) or "path" not in spec):
            raise ConfigError(f"{where}: expected a mapping with a 'path' field")
    return cur, hist


def load_datasets(cfg, need_current=True, need_hist=True):
    cur_spec, hist_specs = _dataset_specs(cfg, need_current, need_hist)
    schema = cfg["schema"]
    for key in ("time", "event", "stratum", "covariates"):
        if key not in schema:
            raise ConfigError(f"schema.{key}: missing")
    specs = ([("current", cur_spec)] if cur_spec else []) + [("historical", h) for h in hist_specs]
    labels = []
    for _, spec in specs:
        rows = read_rows(_resolve(cfg, spec["path"]), schema, spec.get("select"))
        labels.append([r[schema["stratum"]].strip() for r in rows])
    smap = StratumMap.from_labels(*labels)
    loaded = [load_dataset(_resolve(cfg, spec["path"]), schema, role, spec.get("select"), smap)
              for role, spec in specs]
    current = loaded[0] if cur_spec else None
    historical = loaded[1:] if cur_spec else loaded
    return current, historical, smap


def build_prior(cfg) -> PriorSpec:
    p = cfg["prior"]
    try:
        return PriorSpec(BetaPrior(**p["beta"]), HazardPrior(**p["lambda"]), HazardPrior(**p["lambda0"]),
                         bool(p["shared_baseline"]))
    except TypeError as exc:
        raise ConfigError(f"prior: {exc}") from None


def build_sampler(cfg, seed) -> SamplerConfig:
    try:
        return SamplerConfig(**cfg["sampler"], seed=seed)
    except TypeError as exc:
        raise ConfigError(f"sampler: {exc}") from None


def build_partition(cfg, datasets):
    part = cfg["partition"]
    if part.get("cuts") is not None:
        return IntervalPartition(tuple(np.asarray(c, dtype=float) for c in part["cuts"]))
    return default_partition(datasets, part["n_intervals"])


def build_design(cfg) -> TrialDesignConfig:
    d = dict(cfg["design"])
    if d["n_events"] is None:
        raise ConfigError("design.n_events: required")
    if d["n_subjects"] is None:
        raise ConfigError("design.n_subjects: required")
    d["t_max"] = float(d["t_max"])
    names = {f.name for f in fields(TrialDesignConfig)}
    try:
        return TrialDesignConfig(**{k: v for k, v in d.items() if k in names})
    except TypeError as exc:
        raise ConfigError(f"design: {exc}") from None


def resolve_seed(cfg) -> int:
    if cfg["seed"] is None:
        cfg["seed"] = int(np.random.SeedSequence().generate_state(1, dtype=np.uint32)[0])
    return int(cfg["seed"])


def echo(cfg) -> dict:
    return {k: v for k, v in cfg.items() if not k.startswith("_")}


def _fixed_a0(cfg, J):
    a0 = cfg["a0"]["fixed"]
    if a0 is None:
        raise ConfigError("a0.fixed: required for fixed-a0 commands")
    a0 = np.atleast_1d(np.asarray(a0, dtype=float))
    if a0.size != J:
        raise ConfigError(f"a0.fixed: {a0.size} values for {J} historical datasets")
    A0Spec(fixed=tuple(a0))
    return a0


def _a0_prior(cfg, J) -> A0Spec:
    a = cfg["a0"]
    if a["beta_shape1"] is None:
        raise ConfigError("a0.beta_shape1: required (Beta prior on a0)")
    u = np.broadcast_to(np.atleast_1d(np.asarray(a["beta_shape1"], dtype=float)), (J,))
    v = np.broadcast_to(np.atleast_1d(np.asarray(a["beta_shape2"] if a["beta_shape2"] is not None else 1.0,
                                                 dtype=float)), (J,))
    return A0Spec(beta_shape1=tuple(u), beta_shape2=tuple(v))


def _mixture(cfg, current, historical, partition, prior, sampler):
    path = cfg["a0"]["mixture"]
    if path is not None:
        return files.read_mixture(_resolve(cfg, path))
    a0_prior = _a0_prior(cfg, len(historical))
    approx_cfg = SamplerConfig(**{f.name: getattr(sampler, f.name) for f in fields(SamplerConfig)}
                               | {"seed": derive_seed(sampler.seed, 1)})
    hist_part = default_partition(historical, cfg["partition"]["n_intervals"]) \
        if cfg["partition"].get("cuts") is None else partition
    draws = approximate_prior_beta(historical, a0_prior, partition=hist_part, prior=prior,
                                   L=cfg["approximate"]["L"], cfg=approx_cfg)
    return fit_single_mvn(draws)


# ---------------------------------------------------------------------------
# commands

def _out_dir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_analyze(cfg, random_a0=False) -> dict:
    seed = resolve_seed(cfg)
    current, historical, smap = load_datasets(cfg, need_current=True, need_hist=random_a0)
    prior = build_prior(cfg)
    sampler = build_sampler(cfg, seed)
    partition = build_partition(cfg, [current, *historical])
    if random_a0:
        mix = _mixture(cfg, current, historical, partition, prior, sampler)
        draws = phm_random_a0(current, historical, mix, partition=partition, prior=prior, cfg=sampler)
    else:
        a0 = _fixed_a0(cfg, len(historical)) if historical else np.zeros(0)
        draws = phm_fixed_a0(current, historical, a0, partition=partition, prior=prior, cfg=sampler)
    out = _out_dir(cfg)
    draws.to_frame().to_csv(out / "draws.csv", index=False)
    summary = draws.summary(float(cfg["level"]))
    summary["config"] = echo(cfg)
    summary["strata"] = smap.to_dict()
    if random_a0:
        summary["prior_beta_mvn"] = draws.config["prior_beta_mvn"]
    files.write_json(out / "summary.json", summary)
    return summary


def cmd_approximate_prior(cfg) -> dict:
    seed = resolve_seed(cfg)
    _, historical, smap = load_datasets(cfg, need_current=False, need_hist=True)
    prior = build_prior(cfg)
    sampler = build_sampler(cfg, seed)
    partition = build_partition(cfg, historical)
    a0_prior = _a0_prior(cfg, len(historical))
    draws = approximate_prior_beta(historical, a0_prior, partition=partition, prior=prior,
                                   L=cfg["approximate"]["L"], cfg=sampler)
    mix = fit_single_mvn(draws)
    out = _out_dir(cfg)
    files.write_matrix(out / "prior_beta_draws.csv", draws, [f"beta_{n}" for n in historical[0].covariate_names])
    doc = {"components": mix.to_json(), "config": echo(cfg), "L": int(draws.shape[0])}
    files.write_json(out / "prior_beta_mvn.json", doc)
    return doc


def _sampling_prior(cfg, historical, partition, sampler):
    sp = cfg["sampling_prior"]
    if sp["default"] is not None:
        which = str(sp["default"]).upper()
        if which not in ("DN", "DA"):
            raise ConfigError("sampling_prior.default: must be DN or DA")
        dn, da = build_default_sampling_priors(historical, partition=partition, cfg=sampler, prior=build_prior(cfg))
        return dn if which == "DN" else da
    if sp["point"] is not None:
        pt = sp["point"]
        return build_point_mass_prior(pt["beta"], pt["lambda"])
    if sp["beta"] is not None and sp["lambda"] is not None:
        beta = files.read_matrix(_resolve(cfg, sp["beta"]))
        lam_paths = sp["lambda"] if isinstance(sp["lambda"], list) else [sp["lambda"]]
        lam = tuple(files.read_matrix(_resolve(cfg, p)) for p in lam_paths)
        return SamplingPrior(beta, lam, joint=bool(sp.get("joint", False)))
    raise ConfigError("sampling_prior: give default (DN/DA), point, or beta + lambda files")


def cmd_design(cfg, random_a0=False) -> dict:
    seed = resolve_seed(cfg)
    _, historical, _ = load_datasets(cfg, need_current=False, need_hist=True)
    prior = build_prior(cfg)
    sampler = build_sampler(cfg, seed)
    design = build_design(cfg)
    hyp = HypothesisSpec(**cfg["hypothesis"])
    n_intervals = tuple(np.atleast_1d(cfg["partition"]["n_intervals"]).astype(int))
    gen_part = default_partition(historical, n_intervals)
    sampling = _sampling_prior(cfg, historical, gen_part, SamplerConfig(
        **{f.name: getattr(sampler, f.name) for f in fields(SamplerConfig)} | {"seed": derive_seed(seed, 7)}))
    kwargs = {}
    if random_a0:
        kwargs["prior_beta_mvn"] = _mixture(cfg, None, historical, gen_part, prior, sampler)
    else:
        kwargs["a0"] = _fixed_a0(cfg, len(historical))
    result = estimate_operating_characteristic(historical, design, sampling, hyp, n_intervals=n_intervals,
                                               B=int(cfg["B"]), cfg=sampler, prior=prior, seed=seed,
                                               workers=int(cfg["workers"]), generation_partition=gen_part,
                                               max_failure_rate=float(cfg["max_failure_rate"]), **kwargs)
    out = _out_dir(cfg)
    doc = result.to_json(include_trials=True)
    doc["resolved_config"] = echo(cfg)
    files.write_json(out / "design.json", doc)
    label = "random" if random_a0 else ",".join(f"{a:g}" for a in kwargs["a0"])
    table = operating_characteristics_table([{"a0": label, "n_events": design.n_events,
                                              "n_subjects": design.n_subjects, "result": result}])
    table.to_csv(out / "design_table.csv", index=False)
    return doc


def cmd_simulate(cfg) -> dict:
    seed = resolve_seed(cfg)
    _, historical, _ = load_datasets(cfg, need_current=False, need_hist=True)
    sampler = build_sampler(cfg, derive_seed(seed, 7))
    design = build_design(cfg)
    n_intervals = tuple(np.atleast_1d(cfg["partition"]["n_intervals"]).astype(int))
    gen_part = default_partition(historical, n_intervals)
    sampling = _sampling_prior(cfg, historical, gen_part, sampler)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0, 0)))
    beta, lam = sampling.draw(rng)
    complete = simulate_complete_data(design, beta, lam, CovariatePool.from_datasets(historical), gen_part, rng)
    obs, T = construct_observed_data(complete, design.n_events, design.t_min, design.t_max, return_cutoff=True)
    out = _out_dir(cfg)
    obs.to_csv(out / "simulated_trial.csv")
    doc = {"analysis_time": T, "n_observed": obs.n, "n_events": int(obs.events.sum()),
           "beta": beta.tolist(), "lambda": [x.tolist() for x in lam], "config": echo(cfg),
           "schema": {"time": "time", "event": "event", "stratum": "stratum",
                      "covariates": list(obs.covariate_names)}}
    files.write_json(out / "simulate.json", doc)
    return doc


def cmd_summarize(cfg) -> dict:
    current, historical, _ = load_datasets(cfg, need_current=False, need_hist=False)
    frames = []
    for label, ds in ([("current", current)] if current is not None else []) + \
                     [(f"historical_{j + 1}", h) for j, h in enumerate(historical)]:
        tab = summarize(ds)
        tab.insert(0, "dataset", label)
        frames.append(tab)
    if not frames:
        raise ConfigError("summarize: no datasets configured")
    import pandas as pd
    table = pd.concat(frames, ignore_index=True)
    table["risk_time"] = table["risk_time"].round(6)
    out = _out_dir(cfg)
    table.to_csv(out / "summary_table.csv", index=False)
    print(table.to_string(index=False, float_format=lambda v: f"{v:.1f}"))
    return {"rows": table.to_dict(orient="records")}


def run(command: str, cfg: dict) -> dict:
    if command == "analyze-fixed":
        return cmd_analyze(cfg, random_a0=False)
    if command == "analyze-random":
        return cmd_analyze(cfg, random_a0=True)
    if command == "approximate-prior":
        return cmd_approximate_prior(cfg)
    if command == "design-fixed":
        return cmd_design(cfg, random_a0=False)
    if command == "design-random":
        return cmd_design(cfg, random_a0=True)
    if command == "simulate":
        return cmd_simulate(cfg)
    if command == "summarize":
        return cmd_summarize(cfg)
    raise ConfigError(f"unknown command {command!r}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ppsurv", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="YAML or JSON run configuration")
    ap.add_argument("--seed", type=int, help="master seed (drawn from entropy and recorded if absent)")
    ap.add_argument("--workers", type=int, help="worker processes for design runs")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config field, e.g. --set sampler.n_mc=5000")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.set, seed=args.seed, workers=args.workers, out=args.out)
        run(args.command, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeFailure as exc:
        seed = locals().get("cfg", {}).get("seed")
        print(f"error: {exc} (seed {seed})", file=sys.stderr)
        return 3
    except PPSurvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
