"""Shared fixtures.

The 10^5-path Brownian sample backs several Monte-Carlo oracles
(covariance entries, the leading eigenvalue, and the process acceptance
checks); it is expensive enough to build exactly once per session.
"""

import numpy as np
import pytest

from flmcheck import ProcessKind, covariance_estimate, make_uniform_grid, sample_paths


@pytest.fixture(scope="session")
def grid101():
    return make_uniform_grid(101)


@pytest.fixture(scope="session")
def bm_paths_101(grid101):
    return sample_paths(ProcessKind.bm(), grid101, np.random.default_rng(808), 100_000)


@pytest.fixture(scope="session")
def bm_cov_101(grid101, bm_paths_101):
    return covariance_estimate(bm_paths_101, grid101)
