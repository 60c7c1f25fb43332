"""Simulation-based Bayesian power / type I error and sample size selection."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .data import IntervalPartition, SurvivalDataset, check_compatible, default_partition
from .errors import ConfigError, DesignAbortedError, ElicitationError, PPSurvError
from .model import MvnMixture, PriorSpec, check_a0
from .samplers import SamplerConfig, derive_seed, phm_fixed_a0, phm_random_a0
from .trialsim import CovariatePool, TrialDesignConfig, construct_observed_data, simulate_complete_data

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SamplingPrior:
    """Discrete sampling prior: rows of beta and per-stratum rows of lambda.

    With ``joint=True`` one row index is shared by beta and every stratum's
    lambda matrix (row-aligned draws from one posterior run); otherwise beta
    and each stratum's lambda are resampled independently.
    """

    beta: np.ndarray
    lam: tuple
    joint: bool = False

    def __post_init__(self):
        beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        lam = tuple(np.atleast_2d(np.asarray(m, dtype=float)) for m in self.lam)
        if beta.shape[0] < 1 or any(m.shape[0] < 1 for m in lam):
            raise ConfigError("sampling prior matrices need at least one row")
        if any(np.any(m <= 0) for m in lam):
            raise ConfigError("sampling prior hazards must be positive")
        if self.joint and any(m.shape[0] != beta.shape[0] for m in lam):
            raise ConfigError("joint resampling needs equal row counts for beta and lambda")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "lam", lam)

    @property
    def n_intervals(self) -> tuple:
        return tuple(m.shape[1] for m in self.lam)

    def draw(self, rng: np.random.Generator) -> tuple[np.ndarray, list]:
        if self.joint:
            i = int(rng.integers(self.beta.shape[0]))
            return self.beta[i].copy(), [m[i].copy() for m in self.lam]
        i = int(rng.integers(self.beta.shape[0]))
        return self.beta[i].copy(), [m[int(rng.integers(m.shape[0]))].copy() for m in self.lam]


def build_point_mass_prior(beta_point, lambda_point) -> SamplingPrior:
    lam = tuple(np.asarray(x, dtype=float).reshape(1, -1) for x in lambda_point)
    return SamplingPrior(np.asarray(beta_point, dtype=float).reshape(1, -1), lam, joint=True)


def build_default_sampling_priors(historical: Sequence[SurvivalDataset], partition: IntervalPartition | None = None,
                                  n_intervals=None, cfg: SamplerConfig = SamplerConfig(),
                                  prior: PriorSpec = PriorSpec()) -> tuple[SamplingPrior, SamplingPrior]:
    """Default null / alternative priors: the historical posterior (a0 = 1)
    truncated to beta_1 > 0 and beta_1 < 0, with row-aligned lambda draws."""
    historical = list(historical)
    if not historical:
        raise ConfigError("default sampling priors need historical data")
    if partition is None:
        partition = default_partition(historical, n_intervals)
    post = phm_fixed_a0(None, historical, np.ones(len(historical)), partition=partition, prior=prior, cfg=cfg)
    b1 = post.beta[:, 0]
    out = []
    for label, mask in (("null", b1 > 0), ("alternative", b1 < 0)):
        if not mask.any():
            raise ElicitationError(f"no posterior draws fall in the {label} region; increase nMC")
        out.append(SamplingPrior(post.beta[mask], tuple(m[mask] for m in post.lam), joint=True))
    return out[0], out[1]


@dataclass(frozen=True)
class HypothesisSpec:
    """H0: beta_1 >= delta (``null=">="``) or H0: beta_1 <= delta (``null="<="``)."""

    delta: float = 0.0
    null: str = ">="
    gamma: float = 0.975

    def __post_init__(self):
        aliases = {">": ">=", ">=": ">=", "<": "<=", "<=": "<="}
        if self.null not in aliases:
            raise ConfigError(f"null direction must be one of {sorted(aliases)}")
        object.__setattr__(self, "null", aliases[self.null])
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0, 1)")

    def posterior_probability(self, beta1_draws: np.ndarray) -> float:
        """Posterior probability of the alternative region."""
        if self.null == ">=":
            return float(np.mean(beta1_draws < self.delta))
        return float(np.mean(beta1_draws > self.delta))


@dataclass(eq=False)
class DesignResult:
    probabilities: np.ndarray
    indicators: np.ndarray
    failed_trials: list
    config: dict = field(default_factory=dict)

    @property
    def B(self) -> int:
        return int(self.indicators.shape[0])

    @property
    def estimate(self) -> float:
        return float(np.mean(self.indicators)) if self.B else float("nan")

    @property
    def mcse(self) -> float:
        q = self.estimate
        return math.sqrt(q * (1 - q) / self.B) if self.B else float("nan")

    def to_json(self, include_trials: bool = False) -> dict:
        out = {"estimate": self.estimate, "mcse": self.mcse, "B": self.B,
               "n_failed": len(self.failed_trials), "failed_trials": self.failed_trials, "config": self.config}
        if include_trials:
            out["probabilities"] = self.probabilities.tolist()
        return out


# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class _DesignContext:
    historical: tuple
    a0: tuple | None
    mixture: MvnMixture | None
    design: TrialDesignConfig
    sampling: SamplingPrior
    hyp: HypothesisSpec
    n_intervals: tuple
    generation_partition: IntervalPartition
    fitting_partition: IntervalPartition | None
    pool: CovariatePool
    cfg: SamplerConfig
    prior: PriorSpec
    seed: int


def _run_trial(ctx: _DesignContext, b: int) -> float:
    rng = np.random.default_rng(np.random.SeedSequence(ctx.seed, spawn_key=(b, 0)))
    beta, lam = ctx.sampling.draw(rng)
    complete = simulate_complete_data(ctx.design, beta, lam, ctx.pool, ctx.generation_partition, rng)
    obs = construct_observed_data(complete, ctx.design.n_events, ctx.design.t_min, ctx.design.t_max)
    part = ctx.fitting_partition or default_partition([obs, *ctx.historical], ctx.n_intervals)
    cfg = SamplerConfig(**(asdict(ctx.cfg) | {"seed": derive_seed(ctx.seed, b, 1)}))
    if ctx.mixture is None:
        post = phm_fixed_a0(obs, ctx.historical, ctx.a0, partition=part, prior=ctx.prior, cfg=cfg)
    else:
        post = phm_random_a0(obs, ctx.historical, ctx.mixture, partition=part, prior=ctx.prior, cfg=cfg)
    return ctx.hyp.posterior_probability(post.beta[:, 0])


def _run_chunk(ctx: _DesignContext, trials: Sequence[int]) -> list:
    out = []
    for b in trials:
        try:
            out.append((b, _run_trial(ctx, b), None))
        except PPSurvError as exc:
            out.append((b, float("nan"), f"{type(exc).__name__}: {exc}"))
    return out


def estimate_operating_characteristic(historical: Sequence[SurvivalDataset], design: TrialDesignConfig,
                                      sampling: SamplingPrior, hyp: HypothesisSpec = HypothesisSpec(),
                                      n_intervals=None, B: int = 1000, a0=None,
                                      prior_beta_mvn: MvnMixture | None = None,
                                      cfg: SamplerConfig = SamplerConfig(), prior: PriorSpec = PriorSpec(),
                                      seed: int | None = None, workers: int = 1,
                                      generation_partition: IntervalPartition | None = None,
                                      fitting_partition: IntervalPartition | None = None,
                                      max_failure_rate: float = 0.01) -> DesignResult:
    """Estimate Bayesian power or type I error over ``B`` simulated trials.

    Each trial draws parameters from ``sampling``, simulates and censors a
    trial, fits it with the fixed-a0 power prior (``a0``) or the normalized
    power prior approximation (``prior_beta_mvn``), and records whether the
    posterior probability of the alternative reaches ``hyp.gamma``.  Trial b
    uses RNG streams keyed on (seed, b), so results do not depend on
    ``workers``.
    """
    historical = tuple(historical)
    if B < 1:
        raise ConfigError("B must be >= 1")
    if (a0 is None) == (prior_beta_mvn is None):
        raise ConfigError("give exactly one of a0 (fixed) or prior_beta_mvn (random a0)")
    if not historical:
        raise ConfigError("design runs need historical data (covariate pool and partitions)")
    P = check_compatible(historical)
    if sampling.beta.shape[1] != P:
        raise ConfigError(f"sampling prior beta has {sampling.beta.shape[1]} columns, model has {P}")
    a0v = tuple(check_a0(a0, len(historical)).tolist()) if a0 is not None else None
    if n_intervals is None:
        n_intervals = sampling.n_intervals
    n_intervals = tuple(int(k) for k in np.atleast_1d(n_intervals))
    if generation_partition is None:
        generation_partition = default_partition(historical, n_intervals)
    if generation_partition.n_intervals != sampling.n_intervals:
        raise ConfigError(f"sampling prior lambda columns {sampling.n_intervals} do not match the "
                          f"generation partition {generation_partition.n_intervals}")
    seed = cfg.resolved_seed() if seed is None else int(seed)
    ctx = _DesignContext(historical, a0v, prior_beta_mvn, design, sampling, hyp, n_intervals,
                         generation_partition, fitting_partition, CovariatePool.from_datasets(historical),
                         cfg, prior, seed)
    trials = list(range(B))
    if workers <= 1:
        results = _run_chunk(ctx, trials)
    else:
        chunks = [trials[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = [r for part in pool.map(_run_chunk, [ctx] * workers, chunks) for r in part]
    results.sort(key=lambda r: r[0])
    probs = np.array([r[1] for r in results])
    failed = [{"trial": b, "seed": derive_seed(seed, b, 1), "error": err} for b, _, err in results if err]
    if len(failed) > max_failure_rate * B:
        raise DesignAbortedError(f"{len(failed)} of {B} trials failed (limit {max_failure_rate:.1%}); "
                                 f"first error: {failed[0]['error']}", [f["seed"] for f in failed])
    ok = ~np.isnan(probs)
    indicators = (probs[ok] >= hyp.gamma).astype(np.int64)
    config = {
        "seed": seed, "B": B, "workers": workers,
        "a0": list(a0v) if a0v is not None else None,
        "prior_beta_mvn": prior_beta_mvn.to_json() if prior_beta_mvn is not None else None,
        "design": asdict(design), "hypothesis": asdict(hyp), "sampler": asdict(cfg),
        "n_intervals": list(n_intervals), "generation_partition": generation_partition.to_dict(),
        "sampling_prior_rows": int(sampling.beta.shape[0]), "sampling_prior_joint": sampling.joint,
    }
    return DesignResult(probs[ok], indicators, failed, config)


@dataclass(frozen=True)
class SampleSizeDecision:
    n: int | None
    n_alpha0: int | None
    n_alpha1: int | None
    feasible: bool
    message: str


def decide_sample_size(results: Mapping[int, tuple[float, float]], alpha0: float = 0.05,
                       alpha1: float = 0.2) -> SampleSizeDecision:
    """max(min{n: q0 <= alpha0}, min{n: q1 >= 1 - alpha1}), applied literally to the grid."""
    if not results:
        raise ConfigError("no (n, q0, q1) results supplied")
    ns = sorted(results)
    n0 = next((n for n in ns if results[n][0] <= alpha0), None)
    n1 = next((n for n in ns if results[n][1] >= 1 - alpha1), None)
    if n0 is None or n1 is None:
        binding = [name for name, v in (("type I error <= alpha0", n0), ("power >= 1 - alpha1", n1)) if v is None]
        return SampleSizeDecision(None, n0, n1, False, "infeasible on this grid: " + " and ".join(binding))
    note = "minimum taken over the grid as given; Monte Carlo rates need not be monotone in n"
    return SampleSizeDecision(max(n0, n1), n0, n1, True, note)


def operating_characteristics_table(rows: Sequence[Mapping]) -> pd.DataFrame:
    """Flatten design results keyed by grid settings into a plot-ready table."""
    out = []
    for row in rows:
        res = row["result"]
        out.append({k: v for k, v in row.items() if k != "result"} | {"estimate": res.estimate, "mcse": res.mcse,
                                                                       "B": res.B})
    return pd.DataFrame(out)
