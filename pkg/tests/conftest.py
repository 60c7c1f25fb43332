import numpy as np
import pytest

from ppsurv.data import SurvivalDataset, load_melanoma


@pytest.fixture(scope="session")
def melanoma():
    return load_melanoma()


def random_dataset(rng, n=20, P=2, S=2, role="current", scale=1.0):
    X = np.column_stack([rng.integers(0, 2, n), rng.normal(size=(n, P - 1))]) if P > 1 else \
        rng.integers(0, 2, (n, 1)).astype(float)
    strata = np.r_[np.arange(1, S + 1), rng.integers(1, S + 1, n - S)]
    return SurvivalDataset(rng.exponential(scale, n), rng.integers(0, 2, n), X, strata, role)


@pytest.fixture
def make_dataset():
    return random_dataset
