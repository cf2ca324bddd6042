import numpy as np
import pytest

from csmooth.core.smoother import Observations
from csmooth.models import ConstraintSet, Kernel
from csmooth.strategies import RefinementContext


@pytest.fixture
def refinement_context(
    matern52: Kernel, monotone_obs: Observations, bounded_monotone: ConstraintSet
) -> RefinementContext:
    return RefinementContext(
        kernel=matern52,
        obs=monotone_obs,
        cs=bounded_monotone,
        jitter=True,
        max_candidates=6,
        rng=np.random.default_rng(17),
    )
