"""Posterior samplers: fixed-a0 power prior, normalized power prior approximation, random a0."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from . import _kernels as K
from .data import (CompressedRisk, IntervalPartition, SurvivalDataset, build_risk_table,
                   check_compatible, default_partition)
from .errors import (ConfigError, DegenerateConditionalError, FittingError, SamplerError)
from .model import A0Spec, MvnMixture, PriorSpec, check_a0

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SamplerConfig:
    n_mc: int = 10000
    n_burnin: int = 200
    width_beta: float = 1.0
    width_loglam: float = 1.0
    max_steps: int = 10
    seed: int | None = None

    def __post_init__(self):
        if self.n_mc < 1:
            raise ConfigError("n_mc must be >= 1")
        if self.n_burnin < 0:
            raise ConfigError("n_burnin must be >= 0")
        if self.width_beta <= 0 or self.width_loglam <= 0:
            raise ConfigError("slice widths must be positive")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")

    def resolved_seed(self) -> int:
        if self.seed is not None:
            return int(self.seed)
        return int(np.random.SeedSequence().generate_state(1, dtype=np.uint32)[0])


def derive_seed(master: int, *key: int) -> int:
    """Counter-based child seed: a pure function of the master seed and the key."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass(eq=False)
class PosteriorDraws:
    beta: np.ndarray
    lam: list
    lam0: list | None
    a0: tuple | str
    partition: IntervalPartition
    covariate_names: tuple
    seed: int
    clamp_count: int = 0
    config: dict = field(default_factory=dict)

    @property
    def n_mc(self) -> int:
        return self.beta.shape[0]

    def columns(self) -> dict:
        cols = {}
        for p, name in enumerate(self.covariate_names):
            cols[f"beta_{name}"] = self.beta[:, p]
        for s, m in enumerate(self.lam):
            for k in range(m.shape[1]):
                cols[f"lambda_{s + 1}_{k + 1}"] = m[:, k]
        if self.lam0 is not None:
            for s, m in enumerate(self.lam0):
                for k in range(m.shape[1]):
                    cols[f"lambda0_{s + 1}_{k + 1}"] = m[:, k]
        return cols

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.columns())

    def summary(self, level: float = 0.95) -> dict:
        lo, hi = (1 - level) / 2, 1 - (1 - level) / 2
        out = {}
        for name, x in self.columns().items():
            out[name] = {"mean": float(np.mean(x)), "sd": float(np.std(x, ddof=1)) if x.size > 1 else 0.0,
                         "lower": float(np.quantile(x, lo)), "upper": float(np.quantile(x, hi))}
        return {"level": level, "n_mc": self.n_mc, "seed": self.seed,
                "a0": self.a0 if isinstance(self.a0, str) else list(self.a0),
                "partition": self.partition.to_dict(), "clamp_count": self.clamp_count,
                "parameters": out}


# ---------------------------------------------------------------------------

def _hazard_arrays(hp, C):
    if hp.kind == "lognormal":
        mu, sd = hp.lognormal_params(C)
        return 1, np.zeros(C), np.zeros(C), mu, sd
    a, b = hp.gamma_params(C)
    return 0, a, b, np.zeros(C), np.ones(C)


def _crude_hazards(tables, partition) -> np.ndarray:
    """Events / risk time per stratum, repeated over that stratum's intervals."""
    out = np.ones(partition.n_cells)
    off = partition.offsets
    for s in range(partition.n_strata):
        ev = sum(float(t.interval_events[:, off[s]:off[s + 1]].sum()) for t in tables)
        rt = sum(float(t.exposure[:, off[s]:off[s + 1]].sum()) for t in tables)
        if ev > 0 and rt > 0:
            out[off[s]:off[s + 1]] = ev / rt
    return out


def _raise_status(status, where, partition, names, seed):
    if status == K.OK:
        return
    C = partition.n_cells

    def cell(c):
        off = partition.offsets
        s = int(np.searchsorted(off, c, side="right"))
        return s, int(c - off[s - 1] + 1)

    if status in (K.NAN_BETA, K.SHRINK_FAIL):
        raise SamplerError(f"slice sampler failed on coefficient {names[where]!r} (seed {seed})")
    if status == K.NAN_LAMBDA:
        which = "lambda0" if where >= C else "lambda"
        s, k = cell(where % C)
        raise SamplerError(f"slice sampler failed on {which}[{s},{k}] (seed {seed})")
    which = "lambda" if status == K.DEGENERATE_LAMBDA else "lambda0"
    s, k = cell(where)
    raise DegenerateConditionalError(
        f"{which}[{s},{k}]: improper Gamma full conditional (no events and improper prior); "
        "use a proper Gamma prior or merge intervals")


def _run_gibbs(cfg, seed, cur: CompressedRisk, hist: CompressedRisk, partition, prior: PriorSpec,
               init_lam, init_lam0, shared, sample_lam0, beta_prior_kind, mix: MvnMixture | None, P,
               init_beta=None):
    C = partition.n_cells
    mu, sd = prior.beta.params(P)
    if mix is not None:
        mm, mp, mlc = mix.means, mix.precisions(), mix.log_constants()
        if mix.dim != P:
            raise ConfigError(f"beta mixture has dimension {mix.dim} but the model has {P} covariates")
    else:
        mm, mp, mlc = np.zeros((1, P)), np.zeros((1, P, P)), np.zeros(1)
    lk, la, lb, lmu, lsd = _hazard_arrays(prior.lam, C)
    l0k, l0a, l0b, l0mu, l0sd = _hazard_arrays(prior.lam0, C)
    Z = np.ascontiguousarray(np.vstack([cur.patterns, hist.patterns]), dtype=float)
    return K.gibbs(np.uint32(seed), int(cfg.n_mc), int(cfg.n_burnin), float(cfg.width_beta),
                   float(cfg.width_loglam), int(cfg.max_steps),
                   np.zeros(P) if init_beta is None else np.asarray(init_beta, dtype=float).reshape(P),
                   init_lam.astype(float), init_lam0.astype(float),
                   Z, int(cur.patterns.shape[0]), np.ascontiguousarray(cur.exposure),
                   np.ascontiguousarray(hist.exposure), cur.event_x + hist.event_x, cur.events, hist.events,
                   beta_prior_kind, mu, sd, np.ascontiguousarray(mm), np.ascontiguousarray(mp),
                   np.ascontiguousarray(mlc),
                   lk, la, lb, lmu, lsd, l0k, l0a, l0b, l0mu, l0sd, bool(shared), bool(sample_lam0))


def _resolve_partition(datasets, partition, n_intervals):
    if partition is not None:
        return partition
    if n_intervals is None:
        raise ConfigError("either a partition or n_intervals is required")
    return default_partition(datasets, n_intervals)


def phm_fixed_a0(current: SurvivalDataset | None, historical: Sequence[SurvivalDataset], a0,
                 partition: IntervalPartition | None = None, n_intervals=None,
                 prior: PriorSpec = PriorSpec(), cfg: SamplerConfig = SamplerConfig(),
                 init_beta=None) -> PosteriorDraws:
    """Power-prior posterior with fixed a0 by slice-within-Gibbs sampling.

    Each sweep slice-samples the beta coordinates in order, then draws every
    lambda cell from its Gamma conditional (slice-sampled on the log scale
    under a log-normal prior), then lambda0 when baselines are unshared.

    With ``current=None`` the historical datasets are the only data and the
    returned ``lam`` are their (shared) baseline hazards.  The chain starts
    at beta = 0 unless ``init_beta`` is given.
    """
    historical = list(historical)
    datasets = ([current] if current is not None else []) + historical
    if not datasets:
        raise ConfigError("need current data or at least one historical dataset")
    if current is not None and current.n == 0:
        raise ConfigError("current dataset is empty")
    P = check_compatible(datasets)
    a0v = check_a0(a0, len(historical)) if historical else np.zeros(0)
    partition = _resolve_partition(datasets, partition, n_intervals)
    C = partition.n_cells
    hist_tables = [build_risk_table(h, partition) for h in historical]
    hist = (CompressedRisk.stack([t.compress() for t in hist_tables], a0v) if hist_tables
            else CompressedRisk.empty(P, C))
    if current is not None:
        cur_table = build_risk_table(current, partition)
        cur = cur_table.compress()
        init_lam = _crude_hazards([cur_table], partition)
    else:
        cur = CompressedRisk.empty(P, C)
        init_lam = _crude_hazards(hist_tables, partition)
    shared = prior.shared_baseline or current is None
    sample_lam0 = (not shared) and bool(historical)
    init_lam0 = _crude_hazards(hist_tables, partition) if hist_tables else np.ones(C)
    seed = cfg.resolved_seed()
    kind = 1 if prior.beta.kind == "normal" else 0
    b, lam, lam0, status, where, clamps = _run_gibbs(cfg, seed, cur, hist, partition, prior, init_lam,
                                                      init_lam0, shared, sample_lam0, kind, None, P,
                                                      init_beta)
    names = datasets[0].covariate_names
    _raise_status(status, where, partition, names, seed)
    if clamps:
        log.warning("linear predictor clamped %d time(s) during sampling", clamps)
    return PosteriorDraws(b, partition.split_cells(lam),
                          partition.split_cells(lam0) if sample_lam0 else None,
                          tuple(a0v.tolist()), partition, names, seed, int(clamps),
                          {"sampler": asdict(cfg) | {"seed": seed}, "shared_baseline": bool(shared)})


def phm_random_a0(current: SurvivalDataset, historical: Sequence[SurvivalDataset],
                  prior_beta_mvn: MvnMixture | None = None, partition: IntervalPartition | None = None,
                  n_intervals=None, prior: PriorSpec = PriorSpec(), cfg: SamplerConfig = SamplerConfig(),
                  a0_prior: A0Spec | None = None) -> PosteriorDraws:
    """Posterior under the normalized power prior with a0 and lambda0 marginalized.

    beta gets the (mixture of) multivariate normal approximation to
    pi(beta | D0) as its prior; lambda uses the current data only.  Without
    ``prior_beta_mvn`` the approximation is computed here from ``a0_prior``
    (default Beta(1, 1) per dataset) and a single normal fit.
    """
    historical = list(historical)
    if current is None or current.n == 0:
        raise ConfigError("phm_random_a0 needs a nonempty current dataset")
    if prior.shared_baseline:
        raise ConfigError("the normalized power prior supports unshared baseline hazards only")
    datasets = [current] + historical
    P = check_compatible(datasets)
    partition = _resolve_partition(datasets, partition, n_intervals)
    seed = cfg.resolved_seed()
    if prior_beta_mvn is None:
        if not historical:
            raise ConfigError("need historical data to approximate the prior on beta")
        a0_prior = a0_prior or A0Spec(beta_shape1=(1.0,) * len(historical), beta_shape2=(1.0,) * len(historical))
        approx_cfg = SamplerConfig(**(asdict(cfg) | {"seed": derive_seed(seed, 1)}))
        draws = approximate_prior_beta(historical, a0_prior, partition=partition, prior=prior, cfg=approx_cfg)
        prior_beta_mvn = fit_single_mvn(draws)
    C = partition.n_cells
    cur_table = build_risk_table(current, partition)
    cur = cur_table.compress()
    b, lam, _, status, where, clamps = _run_gibbs(cfg, seed, cur, CompressedRisk.empty(P, C), partition, prior,
                                                   _crude_hazards([cur_table], partition), np.ones(C),
                                                   False, False, 2, prior_beta_mvn, P)
    _raise_status(status, where, partition, current.covariate_names, seed)
    return PosteriorDraws(b, partition.split_cells(lam), None, "marginalized", partition,
                          current.covariate_names, seed, int(clamps),
                          {"sampler": asdict(cfg) | {"seed": seed}, "prior_beta_mvn": prior_beta_mvn.to_json()})


def approximate_prior_beta(historical: Sequence[SurvivalDataset], a0_prior: A0Spec,
                           partition: IntervalPartition | None = None, n_intervals=None,
                           prior: PriorSpec = PriorSpec(), L: int | None = None,
                           cfg: SamplerConfig = SamplerConfig(), return_a0: bool = False):
    """Discrete draws from pi(beta | D0) = integral of pi(beta | D0, a0) pi(a0) da0.

    For each of ``L`` outer steps (default ``cfg.n_mc``): draw a0 from its
    Beta priors, then run ``cfg.n_burnin`` + 1 slice sweeps of beta on the
    lambda0-integrated kernel, warm-started from the previous step's beta,
    and keep the final state.
    """
    historical = list(historical)
    if not historical:
        raise ConfigError("approximate_prior_beta needs at least one historical dataset")
    if a0_prior.is_fixed:
        raise ConfigError("approximate_prior_beta needs Beta priors on a0, not fixed values")
    if prior.beta.kind != "normal":
        raise ConfigError("the normalized power prior requires normal initial priors on beta")
    if prior.lam0.kind != "gamma":
        raise ConfigError("the normalized power prior requires Gamma priors on lambda0")
    L = int(cfg.n_mc if L is None else L)
    if L < 2:
        raise ConfigError("L must be >= 2")
    P = check_compatible(historical)
    J = len(historical)
    partition = _resolve_partition(historical, partition, n_intervals)
    C = partition.n_cells
    parts = [build_risk_table(h, partition).compress() for h in historical]
    Z = np.ascontiguousarray(np.vstack([p.patterns for p in parts]))
    E = np.ascontiguousarray(np.vstack([p.exposure for p in parts]))
    ds = np.concatenate([np.full(p.patterns.shape[0], j, dtype=np.int64) for j, p in enumerate(parts)])
    Dj = np.vstack([p.events for p in parts])
    Xj = np.vstack([p.event_x for p in parts])
    c0, d0 = prior.lam0.gamma_params(C)
    mu, sd = prior.beta.params(P)
    u, v = a0_prior.beta_params(J)
    seed = cfg.resolved_seed()
    out, a0s, status, where = K.npp_prior_draws(np.uint32(seed), L, int(cfg.n_burnin), float(cfg.width_beta),
                                                int(cfg.max_steps), np.zeros(P), Z, E, ds, Dj, Xj,
                                                c0, d0, mu, sd, u, v)
    if status != K.OK:
        raise SamplerError(f"normalized power prior approximation failed at outer step l={where + 1} (seed {seed})")
    return (out, a0s) if return_a0 else out


def fit_single_mvn(beta_draws) -> MvnMixture:
    """Single multivariate normal with the sample mean and covariance of the draws."""
    x = np.asarray(beta_draws, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    L, P = x.shape
    if L <= P:
        raise FittingError(f"need more draws than dimensions (got L={L}, P={P}); increase L")
    mean = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
    try:
        np.linalg.cholesky(cov)
        if np.any(np.diag(cov) <= 1e-300):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        raise FittingError("sample covariance of the beta draws is singular; increase L") from None
    return MvnMixture(mean[None, :], cov[None, :, :], np.ones(1))
