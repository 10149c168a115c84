from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpe_norm.functionals import ProblemParams, classify
from gpe_norm.geometry import (
    h_function, h_profile, h_root_residuals, h_sign_check, max_feasible_a, p0_empty_scan,
    random_pair, thresholds,
)
from gpe_norm.radial import make_grid, mass

CRIT = ProblemParams(3, 2.656, 4.849, 4.5, 1.5, 9.01, 5.12, 0.589, 0.2144, 1e-4)
SUB = ProblemParams(3, 2.84, 4.73, 1.5, 1.5, 4.75, 0.342, 6.06, 0.422, 1.27)


def test_critical_profile_structure():
    rep = h_profile(CRIT)
    assert rep.feasible and rep.structure_ok
    assert 0 < rep.R0 < rep.R < rep.R1 < rep.R1_bound
    assert rep.k0 > 0
    assert max(h_root_residuals(CRIT, rep)) < 1e-10
    assert h_sign_check(CRIT, rep)


def test_subcritical_profile_structure():
    rep = h_profile(SUB)
    assert rep.structure_ok and rep.feasible
    assert rep.alpha1 is None
    h = h_function(SUB)
    assert h(rep.R) == pytest.approx(rep.k0)


def test_large_mass_is_infeasible():
    amax = max_feasible_a(CRIT)
    assert 0 < amax < 1e6
    assert thresholds(CRIT.replace(a=0.5 * amax))[3]
    assert not thresholds(CRIT.replace(a=2 * amax))[3]


@settings(max_examples=15, deadline=None)
@given(sa=st.floats(0.5, 1.0), sb=st.floats(0.5, 1.0))
def test_zeros_move_apart_as_masses_shrink(sa, sb):
    big = h_profile(SUB)
    small = h_profile(SUB.replace(a=sa * SUB.a, b=sb * SUB.b))
    assert small.R0 <= big.R0 * (1 + 1e-9)
    assert small.R1 >= big.R1 * (1 - 1e-9)


def test_random_pair_masses():
    g = make_grid(3, 20.0, 801)
    rng = np.random.default_rng(3)
    pair = random_pair(g, rng, 0.4, 1.2, full_mass=True)
    assert mass(pair.u) == pytest.approx(0.4)
    assert mass(pair.v) == pytest.approx(1.2)
    part = random_pair(g, rng, 0.4, 1.2)
    assert mass(part.u) <= 0.4 and mass(part.v) <= 1.2


def test_random_pairs_have_two_fiber_points():
    g = make_grid(3, 30.0, 1501)
    rng = np.random.default_rng(11)
    for _ in range(10):
        fa = classify(random_pair(g, rng, SUB.a, SUB.b, full_mass=True), SUB)
        assert fa.n_critical == 2
        assert fa.d2_at_s > 0 > fa.d2_at_t


def test_degenerate_set_scan_is_seeded():
    first = p0_empty_scan(SUB, n_samples=20, seed=5)
    assert first == p0_empty_scan(SUB, n_samples=20, seed=5)
    assert first[0]
