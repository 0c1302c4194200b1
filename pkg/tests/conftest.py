import numpy as np
import pytest

from cfmc import ScoredDataset, SteinKernelParams


@pytest.fixture
def params():
    return SteinKernelParams(alpha1=0.1, alpha2=1.0)


@pytest.fixture
def make_gaussian_dataset():
    """Factory for standard-Gaussian datasets with the sin integrand."""

    def make(n: int, d: int = 1, seed: int = 0) -> ScoredDataset:
        rng = np.random.default_rng(seed)
        points = rng.standard_normal((n, d))
        return ScoredDataset(
            points=points,
            scores=-points,
            f_values=np.sin((np.pi / d) * points.sum(axis=1)),
        )

    return make
