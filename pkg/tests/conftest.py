import numpy as np
import pytest

from ivmcd import IntervalDataset, LatentSpec, build_moments


def make_dataset(rng, n, p, kinds=None, center_scale=1.0, range_mean=1.0):
    """Random well-conditioned interval dataset with mixed latent specs."""
    if kinds is None:
        kinds = ["uniform", "triangular", "empirical", "uniform"]
    specs = []
    for j in range(p):
        kind = kinds[j % len(kinds)]
        if kind == "uniform":
            specs.append(LatentSpec.uniform())
        elif kind == "triangular":
            specs.append(LatentSpec.triangular(float(rng.uniform(-0.6, 0.6))))
        elif kind == "degenerate":
            specs.append(LatentSpec.degenerate())
        else:
            specs.append(LatentSpec.empirical(rng.uniform(-1, 1, 64)))
    centers = rng.normal(0.0, center_scale, (n, p))
    ranges = np.abs(rng.normal(range_mean, 0.3 * range_mean, (n, p)))
    return IntervalDataset(centers, ranges, tuple(specs))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def uniform_specs_2():
    return (LatentSpec.uniform(), LatentSpec.uniform())


@pytest.fixture
def uniform_moments_2(uniform_specs_2):
    return build_moments(uniform_specs_2)
