"""Shared fixtures: the default parameter set and cached small fronts.

Front construction is the expensive step, so the profiles used by many
tests are built once per session on coarse grids.
"""

import numpy as np
import pytest

from axonwave.front import compute_front
from axonwave.grid_ops import Grid1D
from axonwave.model import ModelParams


@pytest.fixture(scope="session")
def default_params():
    return ModelParams(alpha=0.01, eps=1e-4, gamma=7.0)


@pytest.fixture(scope="session")
def front_500(default_params):
    return compute_front(Grid1D(500, 1000.0), default_params)


@pytest.fixture(scope="session")
def front_1000(default_params):
    return compute_front(Grid1D(1000, 1000.0), default_params)


@pytest.fixture(scope="session")
def front_2000(default_params):
    return compute_front(Grid1D(2000, 1000.0), default_params)


def stacked(field):
    return np.concatenate([field.u1, field.u2])
