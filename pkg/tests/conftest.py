from __future__ import annotations

import pytest

from gpe_norm.functionals import ProblemParams


@pytest.fixture
def sub_params() -> ProblemParams:
    # subcritical, alpha = beta = 2, N = 2
    return ProblemParams(2, 3.07, 6.43, 2.0, 2.0, 3.96, 0.245, 6.27, 0.599, 0.759)


@pytest.fixture
def crit_params() -> ProblemParams:
    return ProblemParams(3, 2.656, 4.849, 4.5, 1.5, 9.01, 5.12, 0.589, 0.2144, 1e-4)
