import numpy as np
import pytest

from csmooth.core import grid as grids
from csmooth.core.grid import DomainF
from csmooth.core.smoother import Observations
from csmooth.models import Bounds, ConstraintSet, Kernel
from tests.utils.functions import monotone_observations


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240501)


@pytest.fixture
def matern12() -> Kernel:
    return Kernel(family="matern", sigma2=1.0, lengthscale=0.4, nu=0.5)


@pytest.fixture
def matern52() -> Kernel:
    return Kernel(family="matern", sigma2=1.0, lengthscale=0.4, nu=2.5)


@pytest.fixture
def squared_exponential() -> Kernel:
    return Kernel(family="squared_exponential", sigma2=1.0, lengthscale=0.2, nu=None)


@pytest.fixture
def bounded_monotone() -> ConstraintSet:
    return ConstraintSet(bounds=Bounds(lower=0.0, upper=1.0), monotone="increasing")


@pytest.fixture
def bounded() -> ConstraintSet:
    return ConstraintSet(bounds=Bounds(lower=0.0, upper=1.0))


@pytest.fixture
def non_dense() -> DomainF:
    return DomainF.from_pairs([[0.0, 0.3], [0.6, 1.0]])


@pytest.fixture
def monotone_obs() -> Observations:
    return monotone_observations()


@pytest.fixture
def grid10() -> grids.KnotGrid:
    return grids.equispaced(10)
