"""Log-likelihood and prior kernels for the piecewise-constant-hazard PH model.

Every log density here drops the same constants: the likelihood omits
nothing beyond the proportionality in its product form, initial normal
priors on beta keep their normalizing constant, and Gamma priors on hazards
enter only through their kernels.  Ratios across operations remain valid.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import logsumexp

from .data import RiskTable
from .errors import ConfigError, DegenerateConditionalError, DomainError

ETA_CLAMP = 700.0


class ClampWarning(RuntimeWarning):
    """A linear predictor was clamped to +/-700 before exponentiation."""


def linear_predictor(X: np.ndarray, beta) -> np.ndarray:
    eta = X @ np.asarray(beta, dtype=float)
    if np.any(np.abs(eta) > ETA_CLAMP):
        warnings.warn(f"{int(np.sum(np.abs(eta) > ETA_CLAMP))} linear predictor(s) clamped to +/-{ETA_CLAMP:g}",
                      ClampWarning, stacklevel=2)
        eta = np.clip(eta, -ETA_CLAMP, ETA_CLAMP)
    return eta


# ---------------------------------------------------------------------------
# prior specifications

@dataclass(frozen=True)
class BetaPrior:
    """Initial prior on beta: ``"normal"`` (independent N(mean, var)) or ``"uniform"`` (improper flat)."""

    kind: str = "normal"
    mean: float | tuple = 0.0
    var: float | tuple = 1e3

    def __post_init__(self):
        if self.kind not in ("normal", "uniform"):
            raise ConfigError(f"beta prior kind must be 'normal' or 'uniform', got {self.kind!r}")
        if self.kind == "normal" and np.any(np.asarray(self.var, dtype=float) <= 0):
            raise ConfigError("beta prior variance must be positive")

    def params(self, P: int) -> tuple[np.ndarray, np.ndarray]:
        return (np.broadcast_to(np.asarray(self.mean, dtype=float), (P,)).copy(),
                np.sqrt(np.broadcast_to(np.asarray(self.var, dtype=float), (P,))).copy())

    def logpdf(self, beta) -> float:
        beta = np.asarray(beta, dtype=float)
        if self.kind == "uniform":
            return 0.0
        mu, sd = self.params(beta.shape[0])
        return float(np.sum(-0.5 * ((beta - mu) / sd) ** 2 - np.log(sd) - 0.5 * np.log(2 * np.pi)))


@dataclass(frozen=True)
class HazardPrior:
    """Independent prior on each baseline hazard cell.

    ``"gamma"``: Gamma(shape, rate); ``"lognormal"``: N(mean, var) on log hazard;
    ``"improper"``: density proportional to 1/lambda.  Hyperparameters are
    scalars or per-cell vectors in flattened (stratum, interval) order.
    """

    kind: str = "gamma"
    shape: float | tuple = 1e-5
    rate: float | tuple = 1e-5
    mean: float | tuple = 0.0
    var: float | tuple = 1e3

    def __post_init__(self):
        if self.kind not in ("gamma", "lognormal", "improper"):
            raise ConfigError(f"hazard prior kind must be gamma, lognormal or improper, got {self.kind!r}")
        if self.kind == "gamma" and (np.any(np.asarray(self.shape, dtype=float) <= 0)
                                     or np.any(np.asarray(self.rate, dtype=float) <= 0)):
            raise ConfigError("Gamma hazard prior hyperparameters must be positive")
        if self.kind == "lognormal" and np.any(np.asarray(self.var, dtype=float) <= 0):
            raise ConfigError("log-normal hazard prior variance must be positive")

    @property
    def conjugate(self) -> bool:
        return self.kind in ("gamma", "improper")

    def gamma_params(self, C: int) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "improper":
            return np.zeros(C), np.zeros(C)
        if self.kind != "gamma":
            raise ConfigError("Gamma hyperparameters requested from a non-Gamma hazard prior")
        return _cells(self.shape, C), _cells(self.rate, C)

    def lognormal_params(self, C: int) -> tuple[np.ndarray, np.ndarray]:
        return _cells(self.mean, C), np.sqrt(_cells(self.var, C))

    def logpdf(self, lam) -> float:
        """Log prior density in lambda (kernels only for gamma/improper)."""
        lam = np.asarray(lam, dtype=float)
        C = lam.shape[0]
        if self.kind == "lognormal":
            mu, sd = self.lognormal_params(C)
            z = (np.log(lam) - mu) / sd
            return float(np.sum(-0.5 * z * z - np.log(sd) - 0.5 * np.log(2 * np.pi) - np.log(lam)))
        a, b = self.gamma_params(C)
        return float(np.sum((a - 1) * np.log(lam) - b * lam))


def _cells(v, C: int) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size == 1:
        return np.full(C, float(v[0]))
    if v.size != C:
        raise ConfigError(f"expected 1 or {C} hazard hyperparameters, got {v.size}")
    return v.copy()


@dataclass(frozen=True)
class A0Spec:
    """Discounting parameters: a fixed vector, or independent Beta(u_j, v_j) priors."""

    fixed: tuple | None = None
    beta_shape1: tuple | None = None
    beta_shape2: tuple | None = None

    def __post_init__(self):
        if (self.fixed is None) == (self.beta_shape1 is None):
            raise ConfigError("a0 must be either fixed or given Beta priors")
        if self.fixed is not None:
            a0 = np.asarray(self.fixed, dtype=float).reshape(-1)
            if np.any(a0 < 0) or np.any(a0 > 1):
                raise DomainError(f"fixed a0 values must lie in [0, 1], got {a0.tolist()}")
            object.__setattr__(self, "fixed", tuple(a0.tolist()))
        else:
            u = np.atleast_1d(np.asarray(self.beta_shape1, dtype=float))
            v = np.atleast_1d(np.asarray(self.beta_shape2 if self.beta_shape2 is not None else 1.0, dtype=float))
            u, v = np.broadcast_arrays(u, v)
            if np.any(u <= 0) or np.any(v <= 0):
                raise ConfigError("Beta prior hyperparameters for a0 must be positive")
            object.__setattr__(self, "beta_shape1", tuple(u.tolist()))
            object.__setattr__(self, "beta_shape2", tuple(v.tolist()))

    @property
    def is_fixed(self) -> bool:
        return self.fixed is not None

    def beta_params(self, J: int) -> tuple[np.ndarray, np.ndarray]:
        u = np.broadcast_to(np.asarray(self.beta_shape1), (J,)).astype(float)
        v = np.broadcast_to(np.asarray(self.beta_shape2), (J,)).astype(float)
        return u, v


@dataclass(frozen=True)
class PriorSpec:
    beta: BetaPrior = BetaPrior()
    lam: HazardPrior = HazardPrior()
    lam0: HazardPrior = HazardPrior()
    shared_baseline: bool = False


def check_a0(a0, J: int) -> np.ndarray:
    a0 = np.atleast_1d(np.asarray(a0, dtype=float))
    if a0.size == 1 and J > 1:
        a0 = np.repeat(a0, J)
    if a0.size != J:
        raise ConfigError(f"a0 has {a0.size} entries for {J} historical datasets")
    if np.any(a0 < 0) or np.any(a0 > 1) or np.any(~np.isfinite(a0)):
        raise DomainError(f"a0 values must lie in [0, 1], got {a0.tolist()}")
    return a0


def flat_hazards(lam, C: int | None = None) -> np.ndarray:
    """Flatten per-stratum hazard vectors into cell order."""
    if isinstance(lam, (list, tuple)) and lam and np.ndim(lam[0]) >= 1:
        lam = np.concatenate([np.asarray(x, dtype=float).reshape(-1) for x in lam])
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if C is not None and lam.size != C:
        raise ConfigError(f"expected {C} baseline hazards, got {lam.size}")
    return lam


# ---------------------------------------------------------------------------
# likelihood and power prior

def log_likelihood(beta, lam, rt: RiskTable) -> float:
    """Interval-decomposed PWCH-PH log-likelihood.

    sum_c [D_c log lam_c - lam_c sum_i exp(x_i'beta) r_ic] + sum_i nu_i x_i'beta
    """
    beta = np.asarray(beta, dtype=float).reshape(-1)
    lam = flat_hazards(lam, rt.partition.n_cells)
    if beta.shape[0] != rt.dataset.n_covariates:
        raise ConfigError(f"beta has {beta.shape[0]} entries for {rt.dataset.n_covariates} covariates")
    if np.any(lam <= 0) or np.any(~np.isfinite(lam)):
        raise DomainError("baseline hazards must be strictly positive and finite")
    if rt.n == 0:
        return 0.0
    eta = linear_predictor(rt.dataset.covariates, beta)
    D = rt.cell_events()
    return float(D @ np.log(lam) - np.exp(eta) @ (rt.exposure @ lam) + rt.dataset.events @ eta)


def log_power_prior_beta(beta, lam0, historical: Sequence[RiskTable], a0, prior: PriorSpec) -> float:
    """sum_j a0_j log L(beta, lam0 | D0j) + log pi0(beta); lambda0 terms included."""
    a0 = check_a0(a0, len(historical))
    total = sum(a * log_likelihood(beta, lam0, rt) for a, rt in zip(a0, historical))
    return float(total + prior.beta.logpdf(beta))


class GammaParams(NamedTuple):
    shape: float
    rate: float


def _cell_stats(beta, rt: RiskTable, c: int) -> tuple[float, float]:
    if rt.n == 0:
        return 0.0, 0.0
    eta = linear_predictor(rt.dataset.covariates, beta)
    return float(rt.interval_events[:, c].sum()), float(np.exp(eta) @ rt.exposure[:, c])


def lambda_full_conditional(s: int, k: int, beta, current: RiskTable | None,
                            historical: Sequence[RiskTable], a0, prior: PriorSpec,
                            target: str = "current") -> GammaParams:
    """Gamma full conditional of lambda_sk (``target="current"``) or lambda0_sk (``"historical"``).

    ``s`` and ``k`` are 1-based.  With shared baselines the current hazard
    absorbs the a0-weighted historical sums.
    """
    hazard_prior = prior.lam if target == "current" else prior.lam0
    if not hazard_prior.conjugate:
        raise ConfigError("the log-normal hazard prior has no Gamma full conditional")
    tables = [t for t in [current, *historical] if t is not None]
    if not tables:
        raise ConfigError("no risk tables supplied")
    part = tables[0].partition
    c = int(part.offsets[s - 1]) + (k - 1)
    if not (1 <= k <= part.n_intervals[s - 1]):
        raise ConfigError(f"stratum {s} has no interval {k}")
    a0 = check_a0(a0, len(historical)) if historical else np.zeros(0)
    shape0, rate0 = hazard_prior.gamma_params(part.n_cells)
    shape, rate = shape0[c], rate0[c]
    if target == "current":
        if current is not None:
            d, r = _cell_stats(beta, current, c)
            shape, rate = shape + d, rate + r
        if prior.shared_baseline or current is None:
            for a, rt in zip(a0, historical):
                d, r = _cell_stats(beta, rt, c)
                shape, rate = shape + a * d, rate + a * r
    elif target == "historical":
        for a, rt in zip(a0, historical):
            d, r = _cell_stats(beta, rt, c)
            shape, rate = shape + a * d, rate + a * r
    else:
        raise ConfigError(f"target must be 'current' or 'historical', got {target!r}")
    if shape <= 0 or rate <= 0:
        raise DegenerateConditionalError(
            f"stratum {s}, interval {k}: Gamma({shape:g}, {rate:g}) conditional is improper; "
            "use a proper Gamma prior or merge intervals")
    return GammaParams(float(shape), float(rate))


def npp_shape_rate(beta, a0, historical: Sequence[RiskTable], prior: PriorSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell (p_sk, q_sk) of the lambda0 conditional under Gamma(c, d) priors."""
    a0 = check_a0(a0, len(historical))
    C = historical[0].partition.n_cells
    c, d = prior.lam0.gamma_params(C)
    p, q = c.copy(), d.copy()
    for a, rt in zip(a0, historical):
        if rt.n == 0:
            continue
        eta = linear_predictor(rt.dataset.covariates, beta)
        p += a * rt.cell_events()
        q += a * (np.exp(eta) @ rt.exposure)
    return p, q


def _require_npp_priors(prior: PriorSpec) -> None:
    if prior.beta.kind != "normal":
        raise ConfigError("the normalized power prior requires normal initial priors on beta")
    if prior.lam0.kind != "gamma":
        raise ConfigError("the normalized power prior requires Gamma priors on lambda0")


def log_npp_beta_kernel(beta, a0, historical: Sequence[RiskTable], prior: PriorSpec) -> float:
    """Log kernel of pi(beta | D0, a0) after integrating lambda0 out analytically.

    -sum_c p_c log q_c + sum_j a0_j sum_i nu_i x_i'beta + sum_p log N(beta_p; mu_p, sd_p^2)
    """
    _require_npp_priors(prior)
    beta = np.asarray(beta, dtype=float).reshape(-1)
    a0 = check_a0(a0, len(historical))
    p, q = npp_shape_rate(beta, a0, historical, prior)
    if np.any(q <= 0):
        raise DomainError("q_sk must be positive")
    event_term = sum(a * float(rt.dataset.events @ (rt.dataset.covariates @ beta)) for a, rt in zip(a0, historical))
    return float(-np.sum(p * np.log(q)) + event_term + prior.beta.logpdf(beta))


# ---------------------------------------------------------------------------
# multivariate normal mixtures

@dataclass(frozen=True, eq=False)
class MvnMixture:
    means: np.ndarray        # M x P
    covs: np.ndarray         # M x P x P
    weights: np.ndarray      # M

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        M, P = means.shape
        covs = np.asarray(self.covs, dtype=float).reshape(M, P, P)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.size != M or np.any(w <= 0):
            raise ConfigError("mixture weights must be positive, one per component")
        w = w / w.sum()
        chol = np.empty_like(covs)
        for m in range(M):
            if not np.allclose(covs[m], covs[m].T, rtol=1e-10, atol=1e-14):
                raise ConfigError(f"mixture component {m + 1}: covariance is not symmetric")
            try:
                chol[m] = np.linalg.cholesky(covs[m])
            except np.linalg.LinAlgError:
                raise ConfigError(f"mixture component {m + 1}: covariance is not positive definite") from None
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_chol", chol)

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def precisions(self) -> np.ndarray:
        return np.linalg.inv(self.covs)

    def log_constants(self) -> np.ndarray:
        """log w_m - P/2 log(2 pi) - 1/2 log|Sigma_m| per component."""
        logdet = 2 * np.log(np.diagonal(self._chol, axis1=1, axis2=2)).sum(axis=1)
        return np.log(self.weights) - 0.5 * self.dim * np.log(2 * np.pi) - 0.5 * logdet

    def logpdf(self, beta) -> np.ndarray | float:
        x = np.asarray(beta, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        terms = np.empty((x.shape[0], self.n_components))
        for m in range(self.n_components):
            z = np.linalg.solve(self._chol[m], (x - self.means[m]).T)
            terms[:, m] = -0.5 * np.sum(z * z, axis=0)
        out = logsumexp(terms + self.log_constants(), axis=1)
        return float(out[0]) if single else out

    def to_json(self) -> list:
        return [{"mean": self.means[m].tolist(), "cov": self.covs[m].tolist(), "weight": float(self.weights[m])}
                for m in range(self.n_components)]

    @classmethod
    def from_json(cls, comps) -> "MvnMixture":
        if isinstance(comps, dict):
            comps = comps.get("components", [comps])
        if not comps:
            raise ConfigError("mixture needs at least one component")
        means = [np.atleast_1d(np.asarray(c["mean"], dtype=float)) for c in comps]
        P = means[0].size
        covs = [np.asarray(c["cov"], dtype=float).reshape(P, P) for c in comps]
        return cls(np.vstack(means), np.stack(covs), np.array([float(c.get("weight", 1.0)) for c in comps]))

    @classmethod
    def from_normal_prior(cls, prior: BetaPrior, P: int) -> "MvnMixture":
        mu, sd = prior.params(P)
        return cls(mu[None, :], np.diag(sd ** 2)[None, :, :], np.ones(1))


def log_mixture_density(beta, mix: MvnMixture) -> float:
    return mix.logpdf(np.asarray(beta, dtype=float).reshape(-1))
