"""Small statistical helpers shared by the test modules."""
import numpy as np
from scipy import stats

# Asymptotic 1% upper critical value of A^2 for a fully specified null.
AD_CRIT_1PCT = 3.878


def ad_statistic(u):
    """Anderson-Darling A^2 of probability-integral-transformed values against U(0, 1)."""
    u = np.sort(np.clip(np.asarray(u, dtype=float), 1e-300, 1 - 1e-16))
    n = u.size
    i = np.arange(1, n + 1)
    return -n - np.mean((2 * i - 1) * (np.log(u) + np.log1p(-u[::-1])))


def ad_gamma_passes(x, shape, rate):
    return ad_statistic(stats.gamma.cdf(x, shape, scale=1 / rate)) < AD_CRIT_1PCT


def batch_se(x, n_batches=50):
    x = np.asarray(x, dtype=float)
    m = x[: x.size // n_batches * n_batches].reshape(n_batches, -1).mean(axis=1)
    return m.std(ddof=1) / np.sqrt(n_batches)


def ks_thinned(a, b, thin=10):
    """Two-sample KS p-value on chains thinned to near-independence."""
    return stats.ks_2samp(np.asarray(a)[::thin], np.asarray(b)[::thin]).pvalue
