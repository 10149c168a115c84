from __future__ import annotations

import math

import numpy as np
import pytest

from gpe_norm.radial import make_grid, mass
from gpe_norm.scalar import (
    canonical_soliton, flow_ground_state, nu_threshold, scalar_ground_state,
)


def test_soliton_one_dimensional_closed_form():
    g = make_grid(1, 40.0, 8001)
    U = canonical_soliton(4.0, 1, g)
    assert np.max(np.abs(U.values - math.sqrt(2) / np.cosh(g.r))) < 1e-6


@pytest.mark.parametrize("N,eta,mu,a", [(1, 4.0, 1.0, 4.0), (2, 3.0, 1.0, 2.0), (3, 4.5, 1.0, 1.0)])
def test_ground_state_mass_and_pohozaev(N, eta, mu, a):
    sg = scalar_ground_state(eta, mu, a, N)
    assert mass(sg.profile) == pytest.approx(a, rel=1e-8)
    assert sg.lam > 0
    assert abs(sg.pohozaev()) <= 1e-6 * sg.grad_sq


def test_one_dimensional_multiplier_and_energy():
    sg = scalar_ground_state(4.0, 1.0, 4.0, 1)
    assert sg.lam == pytest.approx(1.0, abs=1e-6)
    assert sg.energy == pytest.approx(-2 / 3, abs=1e-6)


def test_mass_subcritical_flow_agrees_with_scaling():
    # eta < 2 + 4/N: the sphere minimizer is the rescaled soliton
    grid = make_grid(2, 60.0, 1024)
    sg = scalar_ground_state(3.0, 1.0, 2.0, 2, grid)
    fl = flow_ground_state(3.0, 1.0, 2.0, grid)
    assert fl.lam == pytest.approx(sg.lam, rel=1e-6)
    assert fl.energy == pytest.approx(sg.energy, rel=1e-6)


def test_flow_rejects_supercritical_mass():
    with pytest.raises(ValueError):
        flow_ground_state(5.0, 1.0, 1.0, make_grid(2, 20.0, 500))


def test_threshold_is_zero_in_low_dimension():
    thr = nu_threshold(1.0, 3.0, 1.0, 2, 2.0, with_up=False)
    assert thr.analytic and thr.value == 0.0
    assert thr.value_grid > 0


def test_threshold_positive_in_three_dimensions():
    thr = nu_threshold(1.0, 3.0, 0.5, 3, 2.0, with_up=False)
    assert not thr.analytic
    assert 0 < thr.value <= thr.value_grid
