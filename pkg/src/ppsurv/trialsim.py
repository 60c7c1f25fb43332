"""Simulation of hypothetical trials under the piecewise-exponential PH model."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .data import IntervalPartition, StratumMap, SurvivalDataset
from .errors import ConfigError

ENROLL = ("uniform", "exponential")
CENSOR = ("none", "uniform", "exponential", "constant")


@dataclass(frozen=True)
class TrialDesignConfig:
    """Data-generation settings for one simulated trial.

    Enrollment is uniform on (0, ``enroll_param``) or exponential with rate
    ``enroll_param``.  Censoring is uniform on (0, ``censor_param``),
    exponential with rate ``censor_param``, the constant ``censor_param``, or
    absent.  With probability ``dropout_prob`` a subject also drops out at a
    uniform time on (0, ``dropout_bound``).
    """

    n_subjects: int
    n_events: int
    enroll_dist: str = "uniform"
    enroll_param: float = 1.0
    randomization: float = 0.5
    censor_dist: str = "none"
    censor_param: float | None = None
    dropout_prob: float = 0.0
    dropout_bound: float | None = None
    t_min: float = 0.0
    t_max: float = math.inf

    def __post_init__(self):
        if not (self.n_subjects >= self.n_events >= 1):
            raise ConfigError("need n_subjects >= n_events >= 1")
        if self.enroll_dist not in ENROLL:
            raise ConfigError(f"enroll_dist must be one of {ENROLL}")
        if not self.enroll_param > 0:
            raise ConfigError("enroll_param must be positive")
        if not 0 <= self.randomization <= 1:
            raise ConfigError("randomization must lie in [0, 1]")
        if self.censor_dist not in CENSOR:
            raise ConfigError(f"censor_dist must be one of {CENSOR}")
        if self.censor_dist == "constant":
            if self.censor_param is None or self.censor_param < 0:
                raise ConfigError("constant censoring needs a nonnegative censor_param")
        elif self.censor_dist != "none" and not (self.censor_param and self.censor_param > 0):
            raise ConfigError(f"{self.censor_dist} censoring needs a positive censor_param")
        if not 0 <= self.dropout_prob <= 1:
            raise ConfigError("dropout_prob must lie in [0, 1]")
        if self.dropout_prob > 0 and not (self.dropout_bound and self.dropout_bound > 0):
            raise ConfigError("dropout needs a positive dropout_bound")
        if not (0 <= self.t_min <= self.t_max):
            raise ConfigError("need 0 <= t_min <= t_max")


class CompleteSubject(NamedTuple):
    enrollment: float
    covariates: np.ndarray
    stratum: int
    event_time: float
    censor_time: float
    time: float
    event: int
    elapsed: float


@dataclass(frozen=True, eq=False)
class CompleteTrial:
    """Complete data for every enrolled subject, as parallel arrays."""

    enrollment: np.ndarray
    covariates: np.ndarray
    strata: np.ndarray
    event_time: np.ndarray
    censor_time: np.ndarray
    covariate_names: tuple = ()
    stratum_map: StratumMap | None = None

    @property
    def time(self) -> np.ndarray:
        return np.minimum(self.event_time, self.censor_time)

    @property
    def event(self) -> np.ndarray:
        return (self.event_time <= self.censor_time).astype(np.int64)

    @property
    def elapsed(self) -> np.ndarray:
        return self.enrollment + self.time

    def __len__(self):
        return self.enrollment.shape[0]

    def __getitem__(self, i) -> CompleteSubject:
        return CompleteSubject(float(self.enrollment[i]), self.covariates[i], int(self.strata[i]),
                               float(self.event_time[i]), float(self.censor_time[i]), float(self.time[i]),
                               int(self.event[i]), float(self.elapsed[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))


@dataclass(frozen=True, eq=False)
class CovariatePool:
    """Rows (extra covariates jointly with stratum) that simulated subjects are resampled from."""

    extra: np.ndarray        # m x (P - 1)
    strata: np.ndarray       # m
    covariate_names: tuple
    stratum_map: StratumMap | None = None

    @classmethod
    def from_datasets(cls, datasets: Sequence[SurvivalDataset]) -> "CovariatePool":
        datasets = list(datasets)
        if not datasets:
            raise ConfigError("covariate pool needs at least one dataset")
        extra = np.vstack([d.covariates[:, 1:] for d in datasets])
        strata = np.concatenate([d.strata for d in datasets])
        return cls(extra, strata, datasets[0].covariate_names, datasets[0].stratum_map)

    @property
    def n_covariates(self) -> int:
        return self.extra.shape[1] + 1


def piecewise_exponential_times(rates: np.ndarray, cuts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Sequential construction: draw from the interval's rate, move on while overshooting.

    ``rates`` is n x K (per-subject hazard in each interval), ``cuts`` the K - 1
    interior change points shared by the subjects.
    """
    n, K = rates.shape
    bounds = np.concatenate([[0.0], cuts, [np.inf]])
    t = np.empty(n)
    active = np.arange(n)
    for k in range(K):
        if active.size == 0:
            break
        draw = bounds[k] + rng.exponential(1.0, size=active.size) / rates[active, k]
        over = draw > bounds[k + 1]
        t[active] = draw
        active = active[over]
    return t


def simulate_complete_data(design: TrialDesignConfig, beta, lam, pool: CovariatePool | None,
                           partition: IntervalPartition, rng: np.random.Generator) -> CompleteTrial:
    """Enrollment, treatment, resampled covariates/stratum, event and censoring times."""
    beta = np.asarray(beta, dtype=float).reshape(-1)
    P = beta.shape[0]
    lam = [np.asarray(x, dtype=float).reshape(-1) for x in lam]
    if len(lam) != partition.n_strata or any(len(x) != k for x, k in zip(lam, partition.n_intervals)):
        raise ConfigError(f"hazards {[len(x) for x in lam]} do not match partition intervals {partition.n_intervals}")
    if any(np.any(x <= 0) for x in lam):
        raise ConfigError("generating hazards must be strictly positive")
    n = design.n_subjects
    if design.enroll_dist == "uniform":
        r = rng.uniform(0.0, design.enroll_param, size=n)
    else:
        r = rng.exponential(1.0 / design.enroll_param, size=n)
    trt = (rng.random(n) < design.randomization).astype(float)
    if pool is None or pool.strata.size == 0:
        if P > 1 or partition.n_strata > 1:
            raise ConfigError("an empty covariate pool cannot supply covariates or strata")
        extra = np.zeros((n, 0))
        strata = np.ones(n, dtype=np.int64)
        names, smap = ("trt",), None
    else:
        if pool.n_covariates != P:
            raise ConfigError(f"pool has {pool.n_covariates} covariates but beta has {P}")
        rows = rng.integers(0, pool.strata.size, size=n)
        extra = pool.extra[rows]
        strata = pool.strata[rows]
        names, smap = pool.covariate_names, pool.stratum_map
    X = np.column_stack([trt, extra])
    phi = np.exp(np.clip(X @ beta, -700, 700))
    t = np.empty(n)
    for s in range(1, partition.n_strata + 1):
        idx = np.flatnonzero(strata == s)
        if idx.size:
            rates = phi[idx, None] * lam[s - 1][None, :]
            t[idx] = piecewise_exponential_times(rates, partition.cuts[s - 1], rng)
    if design.censor_dist == "none":
        c = np.full(n, np.inf)
    elif design.censor_dist == "uniform":
        c = rng.uniform(0.0, design.censor_param, size=n)
    elif design.censor_dist == "exponential":
        c = rng.exponential(1.0 / design.censor_param, size=n)
    else:
        c = np.full(n, float(design.censor_param))
    if design.dropout_prob > 0:
        drop = rng.random(n) < design.dropout_prob
        c = np.where(drop, np.minimum(c, rng.uniform(0.0, design.dropout_bound, size=n)), c)
    return CompleteTrial(r, X, strata, t, c, names, smap)


def analysis_time(complete: CompleteTrial, n_events: int, t_min: float = 0.0, t_max: float = math.inf) -> float:
    """Calendar time of the target event count, clamped to [t_min, t_max]."""
    ev = np.sort(complete.elapsed[complete.event == 1])
    T = float(ev[n_events - 1]) if ev.size >= n_events else t_max
    return min(max(T, t_min), t_max)


def construct_observed_data(complete: CompleteTrial, n_events: int, t_min: float = 0.0,
                            t_max: float = math.inf, return_cutoff: bool = False):
    """Observed dataset at the analysis cutoff triggered by the ``n_events``-th event."""
    if n_events < 1:
        raise ConfigError("n_events must be >= 1")
    T = analysis_time(complete, n_events, t_min, t_max)
    keep = complete.enrollment < T
    r = complete.enrollment[keep]
    e = complete.elapsed[keep]
    y_full = complete.time[keep]
    ev_full = complete.event[keep]
    late = e > T
    y = np.where(late, T - r, y_full)
    ev = np.where(late, 0, ev_full)
    ds = SurvivalDataset(y, ev, complete.covariates[keep], complete.strata[keep], "current",
                         complete.covariate_names or tuple(f"x{p + 1}" for p in range(complete.covariates.shape[1])),
                         complete.stratum_map)
    return (ds, T) if return_cutoff else ds
